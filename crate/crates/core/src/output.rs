//! Artifact writing: atomic file replacement and the provenance line that
//! starts every CSV.

use std::io::Write;
use std::path::Path;

use crate::error::Result;

/// First line of every CSV: `# config_hash=<hex> seed=<n>`.
pub fn csv_preamble(hash: &str, seed: u64) -> String {
    format!("# config_hash={hash} seed={seed}\n")
}

/// Write `bytes` to a temporary file next to `path`, then rename it into place,
/// so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replaces_whole_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        write_atomic(&p, b"first\n").unwrap();
        write_atomic(&p, b"second\n").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "second\n");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
        assert!(csv_preamble("ab", 3).starts_with("# config_hash=ab seed=3"));
    }
}
