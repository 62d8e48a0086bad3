//! Synthetic radio maps: building layouts, transmitter placement, a
//! log-distance pathloss model with per-wall attenuation, map-level client
//! partitioning and the binary dataset file format.

mod file;
mod map;
mod partition;
mod sample;

pub use file::{read_dataset, read_dataset_file, write_dataset, write_dataset_file, DATASET_MAGIC, DATASET_VERSION};
pub use map::{
    compute_pathloss, generate_building_map, line_cells, place_transmitter, raw_loss_db, walls_between, BuildingMap,
    MapSpec, PLACEMENT_ATTEMPTS,
};
pub use partition::{partition_clients, Partition};
pub use sample::{generate_dataset, generate_sample, RadioSample};
