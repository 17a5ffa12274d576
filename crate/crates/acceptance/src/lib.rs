//! Holds the `acceptance` integration test; no library code.
