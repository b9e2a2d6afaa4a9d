//! Python bindings for the PAEB pipeline core.

use pyo3::prelude::*;

#[pymodule]
fn paeb_py(_m: &Bound<'_, PyModule>) -> PyResult<()> {
    Ok(())
}
