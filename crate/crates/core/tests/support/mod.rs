pub mod oracle;
pub mod suites;
