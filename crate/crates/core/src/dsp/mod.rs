//! Acoustic front end: mono waveforms to 39-dimensional MFCC sequences.

pub mod featio;
pub mod fft;
pub mod mel;
pub mod mfcc;
pub mod wav;

pub use featio::{read_features, write_features, write_features_csv};
pub use mel::{hz_to_mel, mel_to_hz};
pub use mfcc::{deltas, frame_count, mfcc, FeatureSequence, MfccConfig, Waveform};
pub use wav::{read_wav, write_wav_pcm16};
