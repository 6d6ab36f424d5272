//! Complex tensors, centered orthonormal FFTs, convolution, and a
//! reverse-mode tape over a fixed op vocabulary.

pub mod conv;
pub mod fft;
pub mod ops;
pub mod tape;
pub mod tensor;

pub use conv::conv2d;
pub use fft::{fft2c, ifft2c};
pub use tape::{Gradients, NodeId, Tape, Value};
pub use tensor::{ComplexTensor, RealTensor};
