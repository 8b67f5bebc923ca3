//! File-tree helpers: copying, content hashing, atomic JSON writes.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};
use walkdir::WalkDir;

use crate::error::{EveError, IoContext, Result};

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

/// Forward-slash relative path of `path` under `root`.
pub fn rel_string(root: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path);
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

fn walk_sorted(root: &Path) -> walkdir::IntoIter {
    WalkDir::new(root).sort_by_file_name().min_depth(1).into_iter()
}

fn walk_err(root: &Path, e: walkdir::Error) -> EveError {
    let path = e.path().map_or_else(|| root.to_path_buf(), Path::to_path_buf);
    EveError::Io {
        path,
        source: e.into(),
    }
}

/// Content hash of every regular file (and symlink target text) under `root`,
/// keyed by relative path. Paths for which `skip` returns true are excluded
/// together with their subtrees.
pub fn tree_hashes(root: &Path, skip: impl Fn(&str) -> bool) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    let mut it = walk_sorted(root);
    while let Some(entry) = it.next() {
        let entry = entry.map_err(|e| walk_err(root, e))?;
        let rel = rel_string(root, entry.path());
        if skip(&rel) {
            if entry.file_type().is_dir() {
                it.skip_current_dir();
            }
            continue;
        }
        let ft = entry.file_type();
        if ft.is_file() {
            let bytes = fs::read(entry.path()).at(entry.path())?;
            out.insert(rel, sha256_hex(&bytes));
        } else if ft.is_symlink() {
            let target = fs::read_link(entry.path()).at(entry.path())?;
            out.insert(rel, sha256_hex(format!("symlink:{}", target.display()).as_bytes()));
        }
    }
    Ok(out)
}

/// Single digest over a tree's (path, content hash) pairs.
pub fn tree_digest(root: &Path) -> Result<String> {
    Ok(digest_of(&tree_hashes(root, |_| false)?))
}

pub fn digest_of(hashes: &BTreeMap<String, String>) -> String {
    let mut h = Sha256::new();
    for (path, hash) in hashes {
        h.update(path.as_bytes());
        h.update([0]);
        h.update(hash.as_bytes());
        h.update(b"\n");
    }
    hex(&h.finalize())
}

/// Recursively copies `src` into `dst` (created if missing). Symlinks are
/// recreated, not followed.
pub fn copy_tree(src: &Path, dst: &Path) -> Result<()> {
    fs::create_dir_all(dst).at(dst)?;
    for entry in walk_sorted(src) {
        let entry = entry.map_err(|e| walk_err(src, e))?;
        let target = dst.join(entry.path().strip_prefix(src).expect("walk stays under root"));
        let ft = entry.file_type();
        if ft.is_dir() {
            fs::create_dir_all(&target).at(&target)?;
        } else if ft.is_symlink() {
            let link = fs::read_link(entry.path()).at(entry.path())?;
            std::os::unix::fs::symlink(&link, &target).at(&target)?;
        } else {
            fs::copy(entry.path(), &target).at(&target)?;
        }
    }
    Ok(())
}

/// Copies one file, creating parent directories.
pub fn copy_file(src: &Path, dst: &Path) -> Result<()> {
    if let Some(parent) = dst.parent() {
        fs::create_dir_all(parent).at(parent)?;
    }
    fs::copy(src, dst).at(dst)?;
    Ok(())
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).at(parent)?;
    }
    fs::write(path, bytes).at(path)
}

fn tmp_sibling(path: &Path) -> PathBuf {
    let name = path.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned());
    path.with_file_name(format!(".{name}.tmp"))
}

/// Write-then-rename so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = tmp_sibling(path);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).at(parent)?;
    }
    {
        let mut f = fs::File::create(&tmp).at(&tmp)?;
        f.write_all(bytes).at(&tmp)?;
        f.sync_all().at(&tmp)?;
    }
    fs::rename(&tmp, path).at(path)
}

pub fn to_json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("records serialize");
    bytes.push(b'\n');
    bytes
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, &to_json_bytes(value))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).at(path)?;
    serde_json::from_slice(&bytes).map_err(|source| EveError::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Last `max_bytes` of `text`, cut at a char boundary.
pub fn tail(text: &str, max_bytes: usize) -> &str {
    if text.len() <= max_bytes {
        return text;
    }
    let mut start = text.len() - max_bytes;
    while !text.is_char_boundary(start) {
        start += 1;
    }
    &text[start..]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn copy_and_hash_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let src = dir.path().join("src");
        write_file(&src.join("a/b.txt"), b"hello").unwrap();
        write_file(&src.join("c.txt"), b"world").unwrap();
        let dst = dir.path().join("dst");
        copy_tree(&src, &dst).unwrap();
        let a = tree_hashes(&src, |_| false).unwrap();
        let b = tree_hashes(&dst, |_| false).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.keys().cloned().collect::<Vec<_>>(), vec!["a/b.txt", "c.txt"]);
        assert_eq!(tree_digest(&src).unwrap(), tree_digest(&dst).unwrap());
        write_file(&dst.join("c.txt"), b"world!").unwrap();
        assert_ne!(tree_digest(&src).unwrap(), tree_digest(&dst).unwrap());
        let skipped = tree_hashes(&src, |p| p == "a").unwrap();
        assert_eq!(skipped.len(), 1);
    }

    #[test]
    fn atomic_json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x/y.json");
        write_json(&p, &vec![1, 2, 3]).unwrap();
        let v: Vec<i32> = read_json(&p).unwrap();
        assert_eq!(v, vec![1, 2, 3]);
        assert!(!dir.path().join("x/.y.json.tmp").exists());
        fs::write(&p, b"{nope").unwrap();
        assert!(matches!(read_json::<Vec<i32>>(&p), Err(EveError::Json { .. })));
    }

    #[test]
    fn tail_respects_char_boundaries() {
        assert_eq!(tail("abcdef", 3), "def");
        assert_eq!(tail("ab", 3), "ab");
        assert_eq!(tail("aé", 1), "");
        assert_eq!(tail("aéb", 2), "b");
    }
}
