pub mod dispatch;
pub mod hub;
pub mod pricing;
pub mod qp;
pub mod scenario;
