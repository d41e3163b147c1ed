//! Directory-tree dataset loading: `root/<class_name>/<image files>`.

use std::path::Path;

use crate::error::{Error, Result};

use super::{decode_image, resize_bilinear, LabeledDataset};

/// Loads every image under `root/<class>/`, resized to `target_h x
/// target_w` and normalized to `[0, 1]`.
///
/// Class indices follow the sorted subdirectory names; within a class,
/// samples follow the sorted file names, so two loads of the same tree are
/// identical. Dotfiles are skipped; any other unreadable or undecodable
/// file fails the whole load, naming the path.
pub fn load_dataset(
    root: impl AsRef<Path>,
    target_h: usize,
    target_w: usize,
) -> Result<LabeledDataset> {
    let root = root.as_ref();
    if !root.is_dir() {
        return Err(Error::Dataset(format!(
            "dataset root {} is not a directory",
            root.display()
        )));
    }

    let mut class_dirs: Vec<(String, std::path::PathBuf)> = Vec::new();
    for entry in std::fs::read_dir(root).map_err(|e| Error::io(root, e))? {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        let path = entry.path();
        if path.is_dir() {
            let name = entry.file_name().to_string_lossy().into_owned();
            if !name.starts_with('.') {
                class_dirs.push((name, path));
            }
        }
    }
    if class_dirs.is_empty() {
        return Err(Error::Dataset(format!(
            "no class subdirectories under {}",
            root.display()
        )));
    }
    class_dirs.sort_by(|a, b| a.0.cmp(&b.0));

    let mut samples = Vec::new();
    let mut class_names = Vec::with_capacity(class_dirs.len());
    for (class_index, (name, dir)) in class_dirs.iter().enumerate() {
        let mut files: Vec<std::path::PathBuf> = Vec::new();
        for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
            let entry = entry.map_err(|e| Error::io(dir, e))?;
            let path = entry.path();
            let file_name = entry.file_name().to_string_lossy().into_owned();
            if path.is_file() && !file_name.starts_with('.') {
                files.push(path);
            }
        }
        if files.is_empty() {
            return Err(Error::Dataset(format!(
                "class directory {} has no image files",
                dir.display()
            )));
        }
        files.sort();

        for file in files {
            let bytes = std::fs::read(&file).map_err(|e| Error::io(&file, e))?;
            let image = decode_image(&bytes).map_err(|e| {
                Error::Dataset(format!("cannot decode {}: {e}", file.display()))
            })?;
            let resized = resize_bilinear(&image, target_h, target_w)?;
            samples.push((resized, class_index));
        }
        class_names.push(name.clone());
    }

    LabeledDataset::new(
        samples,
        class_names,
        format!("dir:{}", root.display()),
    )
}
