use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use vsmquant::corpus::Mismatch;
use vsmquant::eval::write_atomic;

use crate::manifest::RunManifest;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    AlreadyPresent,
    Mirror,
    Download,
}

#[derive(Debug)]
pub struct FetchReport {
    pub name: String,
    pub path: PathBuf,
    pub source: Source,
    pub documents: usize,
    pub classes: usize,
    pub mismatches: Vec<Mismatch>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn download(url: &str) -> Result<Vec<u8>, String> {
    if let Some(path) = url.strip_prefix("file://") {
        return fs::read(path).map_err(|e| e.to_string());
    }
    let mut response = ureq::get(url).call().map_err(|e| e.to_string())?;
    let mut bytes = Vec::new();
    response
        .body_mut()
        .as_reader()
        .read_to_end(&mut bytes)
        .map_err(|e| e.to_string())?;
    Ok(bytes)
}

/// Makes one dataset available locally, checks its digest and its document
/// and class counts.
pub fn fetch_dataset(
    manifest: &RunManifest,
    name: &str,
    cache_dir: Option<&Path>,
    mirror: Option<&Path>,
) -> Result<FetchReport, CliError> {
    let entry = manifest.entry(name)?;
    let path = manifest.dataset_path(entry, cache_dir);
    let (bytes, source) = if path.exists() {
        (fs::read(&path)?, Source::AlreadyPresent)
    } else {
        let (bytes, source) = if let Some(dir) = mirror {
            let file = entry.path.file_name().unwrap_or(entry.path.as_os_str());
            let src = dir.join(file);
            let bytes = fs::read(&src).map_err(|e| CliError::DownloadFailure {
                name: name.to_owned(),
                reason: format!("mirror {}: {e}", src.display()),
            })?;
            (bytes, Source::Mirror)
        } else if let Some(url) = &entry.url {
            let bytes = download(url).map_err(|reason| CliError::DownloadFailure {
                name: name.to_owned(),
                reason: format!("{url}: {reason}"),
            })?;
            (bytes, Source::Download)
        } else {
            return Err(CliError::MissingDataset {
                name: name.to_owned(),
                path,
            });
        };
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        (bytes, source)
    };
    if let Some(expected) = &entry.sha256 {
        let found = sha256_hex(&bytes);
        if !found.eq_ignore_ascii_case(expected) {
            return Err(CliError::ChecksumMismatch {
                name: name.to_owned(),
                expected: expected.clone(),
                found,
            });
        }
    }
    if source != Source::AlreadyPresent {
        write_atomic(&path, &bytes)?;
    }
    let corpus = manifest.load_dataset(name, cache_dir)?;
    Ok(FetchReport {
        name: name.to_owned(),
        path,
        source,
        documents: corpus.doc_count(),
        classes: corpus.n_classes(),
        mismatches: entry.verify(&corpus),
    })
}
