use crate::error::{Error, Result};
use crate::gradcore::Tensor;
use crate::rng::{Purpose, StreamKey};
use crate::scalar::Scalar;

use super::map::{compute_pathloss, generate_building_map, place_transmitter, BuildingMap, MapSpec};

/// One training instance: building grid, one-hot transmitter raster and the
/// normalized pathloss target, all `height x width`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RadioSample {
    pub map_id: u16,
    pub height: usize,
    pub width: usize,
    pub building: Vec<f32>,
    pub tx_raster: Vec<f32>,
    pub target: Vec<f32>,
    pub tx_row: usize,
    pub tx_col: usize,
    pub meters_per_cell: f32,
}

impl RadioSample {
    /// Transmitter position in meters, `(x, y)` = cell center `(col, row)`.
    pub fn tx_coord_m(&self) -> [f64; 2] {
        let m = self.meters_per_cell as f64;
        [(self.tx_col as f64 + 0.5) * m, (self.tx_row as f64 + 0.5) * m]
    }

    /// `2 x H x W` network input: building channel then transmitter channel.
    pub fn input_tensor<T: Scalar>(&self) -> Tensor<T> {
        let data = self
            .building
            .iter()
            .chain(&self.tx_raster)
            .map(|&v| T::lit(v as f64))
            .collect();
        Tensor::new(vec![2, self.height, self.width], data).expect("consistent sample")
    }

    pub fn target_tensor<T: Scalar>(&self) -> Tensor<T> {
        let data = self.target.iter().map(|&v| T::lit(v as f64)).collect();
        Tensor::new(vec![1, self.height, self.width], data).expect("consistent sample")
    }

    /// Checks the structural invariants of a sample.
    pub fn validate(&self) -> Result<()> {
        let n = self.height * self.width;
        let bad = |m: String| Err(Error::Format(format!("sample of map {}: {m}", self.map_id)));
        if self.building.len() != n || self.tx_raster.len() != n || self.target.len() != n {
            return bad("grid sizes disagree".into());
        }
        if self.tx_row >= self.height || self.tx_col >= self.width {
            return bad("transmitter out of bounds".into());
        }
        let tx_idx = self.tx_row * self.width + self.tx_col;
        let ones: Vec<usize> = (0..n).filter(|&i| self.tx_raster[i] != 0.0).collect();
        if ones != [tx_idx] || self.tx_raster[tx_idx] != 1.0 {
            return bad("transmitter raster is not one-hot at the transmitter".into());
        }
        if self.building.iter().any(|&b| b != 0.0 && b != 1.0) {
            return bad("building grid is not binary".into());
        }
        if self.building[tx_idx] != 0.0 {
            return bad("transmitter inside a building".into());
        }
        if self.target.iter().any(|&t| !(0.0..=1.0).contains(&t)) {
            return bad("target outside [0, 1]".into());
        }
        if self.target[tx_idx] != 1.0 {
            return bad("target at the transmitter is not 1".into());
        }
        Ok(())
    }
}

/// Builds the sample for one transmitter location on a given map.
pub fn generate_sample(map_id: u16, building: &BuildingMap, tx: (usize, usize), spec: &MapSpec) -> Result<RadioSample> {
    let target = compute_pathloss(building, tx, spec)?;
    let mut tx_raster = vec![0.0f32; building.cells.len()];
    tx_raster[tx.0 * building.width + tx.1] = 1.0;
    Ok(RadioSample {
        map_id,
        height: building.height,
        width: building.width,
        building: building.cells.iter().map(|&c| c as f32).collect(),
        tx_raster,
        target: target.into_iter().map(|v| v as f32).collect(),
        tx_row: tx.0,
        tx_col: tx.1,
        meters_per_cell: spec.meters_per_cell as f32,
    })
}

/// `n_maps` building layouts with `tx_per_map` transmitter realizations
/// each, ordered by map then realization.
pub fn generate_dataset(seed: u64, spec: &MapSpec, n_maps: usize, tx_per_map: usize) -> Result<Vec<RadioSample>> {
    spec.validate()?;
    if n_maps > u16::MAX as usize + 1 {
        return Err(Error::Config(format!("at most 65536 maps, asked for {n_maps}")));
    }
    let mut out = Vec::with_capacity(n_maps * tx_per_map);
    for m in 0..n_maps {
        let building = generate_building_map(
            &mut StreamKey::new(seed, Purpose::Buildings).index(m as u64).stream(),
            spec,
        )?;
        let mut tx_rng = StreamKey::new(seed, Purpose::Transmitter).index(m as u64).stream();
        for _ in 0..tx_per_map {
            let tx = place_transmitter(&mut tx_rng, &building)?;
            out.push(generate_sample(m as u16, &building, tx, spec)?);
        }
    }
    Ok(out)
}
