pub mod enumeration;
pub mod rational;
