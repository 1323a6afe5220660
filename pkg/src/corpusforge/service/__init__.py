"""HTTP service exposing the core operations and the stub backends."""
