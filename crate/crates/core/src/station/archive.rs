use std::fs;
use std::io;
use std::path::{Path, PathBuf};

const FALLBACK_NAME: &str = "request.json";
const MAX_NAME_LEN: usize = 128;

/// Reduces a client-supplied file name to a single safe path component.
/// Separators become `_`; empty, `.` and `..` components are dropped.
pub fn sanitize_file_name(name: &str) -> String {
    let joined = name
        .split(['/', '\\'])
        .filter(|part| !part.is_empty() && *part != "." && *part != "..")
        .map(|part| {
            part.chars()
                .filter(|c| !c.is_control() && *c != ':')
                .collect::<String>()
        })
        .filter(|part| !part.is_empty())
        .collect::<Vec<_>>()
        .join("_");
    let trimmed: String = joined.chars().take(MAX_NAME_LEN).collect();
    if trimmed.is_empty() || trimmed.chars().all(|c| c == '.') {
        FALLBACK_NAME.to_string()
    } else {
        trimmed
    }
}

/// Stores the request document a vehicle sent as
/// `<archive_dir>/<session_id>_<sanitized file name>`.
pub fn archive_request(
    archive_dir: &Path,
    session_id: &str,
    file_name: &str,
    raw_content: &[u8],
) -> io::Result<PathBuf> {
    fs::create_dir_all(archive_dir)?;
    let path = archive_dir.join(format!(
        "{}_{}",
        sanitize_file_name(session_id),
        sanitize_file_name(file_name)
    ));
    fs::write(&path, raw_content)?;
    Ok(path)
}
