use pyo3::prelude::*;

#[pymodule]
fn adan_py(_m: &Bound<'_, PyModule>) -> PyResult<()> {
    Ok(())
}
