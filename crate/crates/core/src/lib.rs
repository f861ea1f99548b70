pub mod bus;
pub mod frontdoor;
pub mod hart;
pub mod irq;
pub mod isa;
pub mod machine;
pub mod periph;
pub mod timing;
