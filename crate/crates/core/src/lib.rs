//! Left-ventricular wall motion analysis with active polynomials.
//!
//! A frame goes through ridge detection, an artificial wall, a Chan-Vese
//! snake and two quartic fits ([`ActivePolynomialPair`]) that are cut into
//! seven segments. Over a cycle the segment displacements, the LVEF gates
//! and the displacement-to-interval ratios give an MI verdict per echo.

pub mod error;
pub mod geometry;
pub mod imaging;
pub mod polyfit;
pub mod levelset;
pub mod chanvese;
pub mod ridge;
pub mod active;
pub mod motion;
pub mod phantom;
pub mod pipeline;
pub mod report;
pub mod metrics;

pub use active::{ActivePolynomialPair, SegmentModel, WallLandmarks};
pub use chanvese::ChanVeseParams;
pub use error::{Error, Result, Stage};
pub use geometry::Point;
pub use imaging::{load_sequence, EchoSequence, Frame, Landmarks, LandmarksFile, Pixel};
pub use levelset::LevelSetField;
pub use metrics::{compute_metrics, evaluate_batch, BatchEvaluation, ConfusionMatrix, EchoTruth, MetricSet};
pub use motion::{Diagnosis, DisplacementCurve, EchoLabel, Gate, LvefGates, Norm, SegmentLabel, SegmentVerdict};
pub use phantom::{generate_phantom, PhantomConfig, PhantomTruth};
pub use pipeline::{process_echo, process_frame, EchoReport, FrameOutput, PipelineConfig};
pub use polyfit::{FitProblem, Polynomial};
pub use report::{emit_report, render_overlay, ReportDocument, ReportFormat};
pub use ridge::{RidgePolynomialPair, WallStyle};
