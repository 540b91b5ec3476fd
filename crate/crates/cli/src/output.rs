use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::CliError;

/// Writes `dir/name` through a temporary file in the same directory and a
/// rename, so readers never see a partial file.
pub fn write_atomic(
    dir: &Path,
    name: &str,
    write: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<(), CliError> {
    let target = dir.join(name);
    let tmp = dir.join(format!(".{name}.tmp"));
    let fail = |e: std::io::Error| CliError::Input(format!("{}: {e}", target.display()));
    let file = File::create(&tmp).map_err(fail)?;
    let mut w = BufWriter::new(file);
    let written = write(&mut w).and_then(|_| w.flush()).and_then(|_| w.get_ref().sync_all());
    if let Err(e) = written {
        let _ = std::fs::remove_file(&tmp);
        return Err(fail(e));
    }
    std::fs::rename(&tmp, &target).map_err(fail)
}

pub fn write_text(dir: &Path, name: &str, text: &str) -> Result<(), CliError> {
    write_atomic(dir, name, |w| w.write_all(text.as_bytes()))
}
