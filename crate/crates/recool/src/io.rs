pub mod placeholder_io {}
