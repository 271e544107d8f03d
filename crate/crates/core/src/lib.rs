//! Free-space detection pipeline: image gradients and blur, border-point
//! extraction from free-space masks, ground-plane projection into weighted
//! point clouds, and a 2D occupancy costmap.

pub mod costmap;
pub mod error;
pub mod evaluation;
pub mod extraction;
pub mod freespace;
pub mod image;
pub mod imaging;
pub mod pipeline;
pub mod ply;
pub mod pnm;
pub mod projection;
pub mod segmenter;

pub use costmap::{Costmap, CostmapParams, RobotPose};
pub use error::{Error, Result};
pub use evaluation::{MetricReport, SceneSpec};
pub use extraction::{BorderPoint, BorderPointSet, ExtractionConfig, Method, PointKind};
pub use freespace::FreespaceMap;
pub use image::{ByteImage, ImageBuffer, Plane};
pub use imaging::{BlurFactor, CropMeta, GradientStack, PreprocessedFrame};
pub use pipeline::{PipelineConfig, TimingReport};
pub use projection::{CameraModel, Point3D, PointCloud3D, ProjectionConfig};
pub use segmenter::{SegmenterBackend, SegmenterSpec};
