//! Commercial detection, ad splicing and MMT-style packetization for linear
//! video streams.

pub mod corpus;
pub mod features;
pub mod feed;
pub mod lvs;
pub mod media;
pub mod meta;
pub mod mmtp;
pub mod pgm;
pub mod pipeline;
pub mod placer;
pub mod shots;
pub mod stream;
pub mod xcorr;

pub use media::{frame_abs_diff, AudioBlock, Fps, Frame, MediaError, Segment, Timecode};
pub use stream::{Stream, StreamDir, StreamWriter};
