//! Raw inputs: frame images, detection label files and knot measurements.

pub mod detection;
pub mod files;
pub mod filter;
pub mod ppm;
pub mod records;

pub use detection::{
    label_file_name, longitudinal_coordinate, parse_detection_file, parse_label_file_name,
    DetectionError, DetectionRecord, FrameMeta,
};
pub use files::{read_boards, read_label_dir, read_measurements, InputError};
pub use filter::{filter_outlier, wood_pixel_fraction, FilterError, FrameDecision, OutlierFilter, WOOD_COLOR};
pub use ppm::{parse_ppm, write_ppm, PpmError, RawImage, Rgb};
pub use records::{assemble_knot_records, AssemblyError, DetectionKey, KnotRecord, MeasurementRow, RecordError};
