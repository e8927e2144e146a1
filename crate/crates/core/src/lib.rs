//! Ballistocardiography signal processing: packet codec, Morlet CWT, occupancy
//! detection, heart/respiration rate estimation and a synthetic signal
//! generator to test them against.
//!
//! The DSP is generic over [`Real`] (`f32` or `f64`); the aliases below fix
//! the scalar for the common cases.

pub mod codec;
pub mod cwt;
pub mod occupancy;
pub mod pipeline;
pub mod scalar;
pub mod synth;
pub mod types;
pub mod vitals;

pub use codec::{decode_stream, min_bitrate_bps, CodecError, SamplePacket, Sca10hFrame, PACKET_SIZE};
pub use cwt::{cwt_row, scalogram, CwtError, MorletParams, Scalogram, StreamingCwt};
pub use occupancy::{
    calibrate_occupancy, OccupancyConfig, OccupancyDetector, OccupancyError, OccupancyState, OccupancyTransition,
};
pub use pipeline::{
    calibrate_sensor, read_calibrations, PipelineError, SecondRecord, SensorCalibration, StreamPipeline,
};
pub use scalar::Real;
pub use synth::{generate_bcg, generate_packets, GroundTruth, SynthError, SynthParams, SynthRecording};
pub use types::{AccelSeries, AnalysisConfig, Axis, SensorChannel, SensorKind, SensorSpec, SAMPLE_RATE_HZ};
pub use vitals::{
    estimate_vitals, BandThresholds, PeakThreshold, PeakTrain, VitalsError, VitalsEstimate, VitalsEstimator,
};

pub type AccelSeriesF64 = AccelSeries<f64>;
pub type AccelSeriesF32 = AccelSeries<f32>;
pub type AnalysisConfigF64 = AnalysisConfig<f64>;
pub type AnalysisConfigF32 = AnalysisConfig<f32>;
pub type ScalogramF64 = Scalogram<f64>;
pub type ScalogramF32 = Scalogram<f32>;
pub type VitalsEstimateF64 = VitalsEstimate<f64>;
pub type VitalsEstimateF32 = VitalsEstimate<f32>;
pub type VitalsEstimatorF64 = VitalsEstimator<f64>;
pub type BandThresholdsF64 = BandThresholds<f64>;
pub type OccupancyConfigF64 = OccupancyConfig<f64>;
pub type OccupancyDetectorF64 = OccupancyDetector<f64>;
pub type SensorCalibrationF64 = SensorCalibration<f64>;
pub type SecondRecordF64 = SecondRecord<f64>;
pub type StreamPipelineF64 = StreamPipeline<f64>;
pub type SynthRecordingF64 = SynthRecording<f64>;
