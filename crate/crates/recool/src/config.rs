pub mod placeholder_config {}
