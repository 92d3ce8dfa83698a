//! On-disk formats: the `MFFC1` container, the descriptor store, dataset manifests
//! and grayscale image loading.
//!
//! A container is the line `MFFC1`, `key=value` header lines, one blank line, then
//! the payload as little-endian `f64` values in row-major order. The descriptor
//! store has the same layout under the magic `MFFCD1` with a little-endian `f32`
//! payload, one row per image.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};

use crate::diversify::{OffspringKind, OffspringSet};
use crate::error::{input, Error, Result};
use crate::filter::{BankKind, ComplexFilter, FilterBank};
use crate::wpca::WpcaModel;

pub const CONTAINER_MAGIC: &str = "MFFC1";
pub const STORE_MAGIC: &str = "MFFCD1";

/// Ordered header plus flat payload.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Container {
    pub header: Vec<(String, String)>,
    pub payload: Vec<f64>,
}

impl Container {
    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.header.push((key.to_string(), value.to_string()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.header.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    fn require(&self, key: &str, path: &Path) -> Result<&str> {
        self.get(key).ok_or_else(|| format_err(path, format!("missing header key `{key}`")))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str, path: &Path) -> Result<T> {
        let raw = self.require(key, path)?;
        raw.parse()
            .map_err(|_| format_err(path, format!("bad value `{raw}` for `{key}`")))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, |w| {
            writeln!(w, "{CONTAINER_MAGIC}")?;
            for (k, v) in &self.header {
                writeln!(w, "{k}={v}")?;
            }
            writeln!(w)?;
            for x in &self.payload {
                w.write_all(&x.to_le_bytes())?;
            }
            Ok(())
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let header = read_header(&mut r, CONTAINER_MAGIC, path)?;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() % 8 != 0 {
            return Err(format_err(path, "payload is not a whole number of f64 values"));
        }
        let payload = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Ok(Self { header, payload })
    }
}

fn format_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

fn read_header(r: &mut impl BufRead, magic: &str, path: &Path) -> Result<Vec<(String, String)>> {
    let mut line = String::new();
    r.read_line(&mut line)?;
    if line.trim_end_matches('\n') != magic {
        return Err(format_err(path, format!("expected magic `{magic}`")));
    }
    let mut header = Vec::new();
    loop {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(format_err(path, "header not terminated by a blank line"));
        }
        let l = line.trim_end_matches('\n');
        if l.is_empty() {
            break;
        }
        let (k, v) = l
            .split_once('=')
            .ok_or_else(|| format_err(path, format!("header line without `=`: {l}")))?;
        header.push((k.to_string(), v.to_string()));
    }
    Ok(header)
}

/// Writes through a temporary sibling and renames it into place on success.
pub fn write_atomic(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| input(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.partial", name.to_string_lossy()));
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        body(&mut w)?;
        w.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn push_filters(payload: &mut Vec<f64>, filters: &[ComplexFilter]) {
    for f in filters {
        payload.extend(f.re.iter());
        payload.extend(f.im.iter());
    }
}

fn take_filters(payload: &[f64], count: usize, side: usize, path: &Path) -> Result<Vec<ComplexFilter>> {
    let plane = side * side;
    if payload.len() != count * 2 * plane {
        return Err(format_err(
            path,
            format!("payload holds {} values, expected {}", payload.len(), count * 2 * plane),
        ));
    }
    payload
        .chunks_exact(2 * plane)
        .map(|c| {
            let re = Array2::from_shape_vec((side, side), c[..plane].to_vec()).expect("sized");
            let im = Array2::from_shape_vec((side, side), c[plane..].to_vec()).expect("sized");
            ComplexFilter::new(re, im)
        })
        .collect()
}

/// Extra `key=value` pairs recorded alongside an artifact (seed, parameters).
pub type Provenance<'a> = &'a [(&'a str, String)];

pub fn bank_to_container(bank: &FilterBank, provenance: Provenance) -> Container {
    let mut c = Container::default()
        .with("artifact", "filter_bank")
        .with("kind", bank.kind().name())
        .with("count", bank.len())
        .with("support", bank.support());
    for (k, v) in provenance {
        c = c.with(k, v);
    }
    push_filters(&mut c.payload, bank.filters());
    c
}

pub fn bank_from_container(c: &Container, path: &Path) -> Result<FilterBank> {
    if c.get("artifact") != Some("filter_bank") {
        return Err(format_err(path, "not a filter bank container"));
    }
    let kind_raw = c.require("kind", path)?;
    let kind = BankKind::parse(kind_raw).ok_or_else(|| format_err(path, format!("unknown bank kind `{kind_raw}`")))?;
    let count: usize = c.parse("count", path)?;
    let support: usize = c.parse("support", path)?;
    FilterBank::new(kind, take_filters(&c.payload, count, support, path)?)
}

pub fn write_bank(path: &Path, bank: &FilterBank, provenance: Provenance) -> Result<()> {
    bank_to_container(bank, provenance).write(path)
}

pub fn read_bank(path: &Path) -> Result<FilterBank> {
    bank_from_container(&Container::read(path)?, path)
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn split_usizes(raw: &str, path: &Path) -> Result<Vec<usize>> {
    raw.split(',')
        .map(|s| s.trim().parse().map_err(|_| format_err(path, format!("bad integer list `{raw}`"))))
        .collect()
}

pub fn offspring_to_container(set: &OffspringSet, provenance: Provenance) -> Container {
    let mut c = Container::default()
        .with("artifact", "offspring")
        .with("kind", set.kind().name())
        .with("fold_sizes", join(set.fold_sizes()))
        .with("side", set.side())
        .with("unique", set.unique_count())
        .with("self_cross", set.is_self_cross())
        .with("dedup", set.dedup_map().map(join).unwrap_or_else(|| "none".into()));
    for (k, v) in provenance {
        c = c.with(k, v);
    }
    push_filters(&mut c.payload, set.unique_filters());
    c
}

pub fn offspring_from_container(c: &Container, path: &Path) -> Result<OffspringSet> {
    if c.get("artifact") != Some("offspring") {
        return Err(format_err(path, "not an offspring container"));
    }
    let kind_raw = c.require("kind", path)?;
    let kind = OffspringKind::parse(kind_raw)
        .ok_or_else(|| format_err(path, format!("unknown offspring kind `{kind_raw}`")))?;
    let fold_sizes = split_usizes(c.require("fold_sizes", path)?, path)?;
    let side: usize = c.parse("side", path)?;
    let unique: usize = c.parse("unique", path)?;
    let self_cross: bool = c.parse("self_cross", path)?;
    let dedup = match c.require("dedup", path)? {
        "none" => None,
        raw => Some(split_usizes(raw, path)?),
    };
    let filters = take_filters(&c.payload, unique, side, path)?;
    OffspringSet::from_parts(kind, fold_sizes, filters, self_cross, dedup)
}

pub fn write_offspring(path: &Path, set: &OffspringSet, provenance: Provenance) -> Result<()> {
    offspring_to_container(set, provenance).write(path)
}

pub fn read_offspring(path: &Path) -> Result<OffspringSet> {
    offspring_from_container(&Container::read(path)?, path)
}

pub fn wpca_to_container(model: &WpcaModel, provenance: Provenance) -> Container {
    let mut c = Container::default()
        .with("artifact", "wpca")
        .with("dim_in", model.dim_in())
        .with("dim_out", model.dim_out());
    for (k, v) in provenance {
        c = c.with(k, v);
    }
    c.payload.extend(model.mean.iter());
    c.payload.extend(model.eigenvalues.iter());
    c.payload.extend(model.projection.iter());
    c
}

pub fn wpca_from_container(c: &Container, path: &Path) -> Result<WpcaModel> {
    if c.get("artifact") != Some("wpca") {
        return Err(format_err(path, "not a WPCA container"));
    }
    let d: usize = c.parse("dim_in", path)?;
    let q: usize = c.parse("dim_out", path)?;
    if c.payload.len() != d + q + q * d {
        return Err(format_err(path, "WPCA payload length does not match dims"));
    }
    let (mean, rest) = c.payload.split_at(d);
    let (eig, proj) = rest.split_at(q);
    Ok(WpcaModel {
        mean: Array1::from(mean.to_vec()),
        eigenvalues: Array1::from(eig.to_vec()),
        projection: Array2::from_shape_vec((q, d), proj.to_vec()).expect("sized"),
    })
}

pub fn write_wpca(path: &Path, model: &WpcaModel, provenance: Provenance) -> Result<()> {
    wpca_to_container(model, provenance).write(path)
}

pub fn read_wpca(path: &Path) -> Result<WpcaModel> {
    wpca_from_container(&Container::read(path)?, path)
}

/// Rows of descriptors with the hash of the configuration that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorStore {
    pub rows: Array2<f32>,
    pub config_hash: String,
}

impl DescriptorStore {
    pub fn from_f64(rows: &Array2<f64>, config_hash: impl Into<String>) -> Self {
        Self {
            rows: rows.mapv(|v| v as f32),
            config_hash: config_hash.into(),
        }
    }

    pub fn to_f64(&self) -> Array2<f64> {
        self.rows.mapv(f64::from)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let (count, dim) = self.rows.dim();
        write_atomic(path, |w| {
            writeln!(w, "{STORE_MAGIC}")?;
            writeln!(w, "count={count}")?;
            writeln!(w, "dim={dim}")?;
            writeln!(w, "config_hash={}", self.config_hash)?;
            writeln!(w)?;
            for x in self.rows.iter() {
                w.write_all(&x.to_le_bytes())?;
            }
            Ok(())
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let header = read_header(&mut r, STORE_MAGIC, path)?;
        let c = Container { header, payload: Vec::new() };
        let count: usize = c.parse("count", path)?;
        let dim: usize = c.parse("dim", path)?;
        let config_hash = c.require("config_hash", path)?.to_string();
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != count * dim * 4 {
            return Err(format_err(path, "store payload does not match count x dim"));
        }
        let values = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        Ok(Self {
            rows: Array2::from_shape_vec((count, dim), values).expect("sized"),
            config_hash,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Split {
    Gallery,
    Probe,
    Train,
    /// One-based fold index.
    Fold(usize),
}

impl Split {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "gallery" => Split::Gallery,
            "probe" => Split::Probe,
            "train" => Split::Train,
            _ => {
                let k: usize = s.strip_prefix("fold_")?.parse().ok()?;
                if k == 0 {
                    return None;
                }
                Split::Fold(k)
            }
        })
    }

    pub fn name(&self) -> String {
        match self {
            Split::Gallery => "gallery".into(),
            Split::Probe => "probe".into(),
            Split::Train => "train".into(),
            Split::Fold(k) => format!("fold_{k}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: String,
    pub subject_id: String,
    pub split: Split,
    pub flip_of: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    /// Directory that relative entry paths resolve against.
    pub root: PathBuf,
}

impl DatasetManifest {
    pub fn new(entries: Vec<ManifestEntry>, root: impl Into<PathBuf>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for e in &entries {
            if !seen.insert(&e.path) {
                return Err(input(format!("duplicate manifest path {}", e.path)));
            }
        }
        Ok(Self {
            entries,
            root: root.into(),
        })
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        let p = Path::new(&entry.path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    pub fn indices_of(&self, split: &Split) -> Vec<usize> {
        (0..self.entries.len()).filter(|&i| self.entries[i].split == *split).collect()
    }

    /// Largest fold index present (0 when no folds).
    pub fn fold_count(&self) -> usize {
        self.entries
            .iter()
            .filter_map(|e| match e.split {
                Split::Fold(k) => Some(k),
                _ => None,
            })
            .max()
            .unwrap_or(0)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let headers = rdr.headers()?.clone();
        let want = ["path", "subject_id", "split"];
        if headers.len() < 3 || headers.iter().take(3).ne(want) {
            return Err(format_err(path, "manifest header must start with path,subject_id,split"));
        }
        let has_flip = headers.get(3) == Some("flip_of");
        let mut entries = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let split_raw = &rec[2];
            let split = Split::parse(split_raw)
                .ok_or_else(|| format_err(path, format!("unknown split `{split_raw}`")))?;
            let flip_of = if has_flip {
                rec.get(3).filter(|s| !s.is_empty()).map(str::to_string)
            } else {
                None
            };
            entries.push(ManifestEntry {
                path: rec[0].to_string(),
                subject_id: rec[1].to_string(),
                split,
                flip_of,
            });
        }
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::new(entries, root)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let has_flip = self.entries.iter().any(|e| e.flip_of.is_some());
        let mut buf = Vec::new();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            if has_flip {
                w.write_record(["path", "subject_id", "split", "flip_of"])?;
            } else {
                w.write_record(["path", "subject_id", "split"])?;
            }
            for e in &self.entries {
                let split = e.split.name();
                if has_flip {
                    w.write_record([e.path.as_str(), &e.subject_id, &split, e.flip_of.as_deref().unwrap_or("")])?;
                } else {
                    w.write_record([e.path.as_str(), &e.subject_id, &split])?;
                }
            }
            w.flush()?;
        }
        write_atomic(path, |w| w.write_all(&buf))
    }
}

/// Loads an image as grayscale values in `[0, 255]`.
///
/// Color inputs are reduced with luma weights 0.299/0.587/0.114. The decoded size
/// must equal `expected` when given; nothing is resized.
pub fn load_image(path: &Path, expected: Option<(usize, usize)>) -> Result<Array2<f64>> {
    let img = image::open(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    if let Some((eh, ew)) = expected {
        if (eh, ew) != (h, w) {
            return Err(input(format!(
                "{} is {h}x{w}, expected {eh}x{ew}",
                path.display()
            )));
        }
    }
    use image::DynamicImage as D;
    let out = match &img {
        D::ImageLuma8(g) => Array2::from_shape_fn((h, w), |(r, c)| g.get_pixel(c as u32, r as u32).0[0] as f64),
        D::ImageLumaA8(g) => Array2::from_shape_fn((h, w), |(r, c)| g.get_pixel(c as u32, r as u32).0[0] as f64),
        D::ImageLuma16(_) | D::ImageLumaA16(_) => {
            let g = img.to_luma16();
            Array2::from_shape_fn((h, w), |(r, c)| g.get_pixel(c as u32, r as u32).0[0] as f64 / 257.0)
        }
        _ => {
            let rgb = img.to_rgb8();
            Array2::from_shape_fn((h, w), |(r, c)| {
                let [red, green, blue] = rgb.get_pixel(c as u32, r as u32).0;
                luma(red, green, blue)
            })
        }
    };
    Ok(out)
}

pub fn luma(r: u8, g: u8, b: u8) -> f64 {
    0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64
}

/// Writes an 8-bit binary PGM, rounding and clamping to `[0, 255]`.
pub fn write_pgm(path: &Path, image: &Array2<f64>) -> Result<()> {
    let (h, w) = image.dim();
    write_atomic(path, |f| {
        write!(f, "P5\n{w} {h}\n255\n")?;
        let bytes: Vec<u8> = image.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect();
        f.write_all(&bytes)
    })
}

/// Column reversal.
pub fn hflip(image: &Array2<f64>) -> Array2<f64> {
    image.slice(ndarray::s![.., ..;-1]).to_owned()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diversify::{make_offspring, DescriptorKind};
    use crate::gabor::{condensed_ensemble, GaborParams};
    use ndarray::array;

    #[test]
    fn flip_examples() {
        let a = array![[1.0, 2.0], [3.0, 4.0]];
        assert_eq!(hflip(&a), array![[2.0, 1.0], [4.0, 3.0]]);
        assert_eq!(hflip(&hflip(&a)), a);
    }

    #[test]
    fn luma_weights() {
        assert!((luma(10, 20, 30) - 18.15).abs() < 1e-12);
    }

    #[test]
    fn containers_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let g = condensed_ensemble(&GaborParams::with_support(5)).unwrap();
        let p = dir.path().join("g.mffc");
        write_bank(&p, &g, &[("seed", "7".into())]).unwrap();
        assert_eq!(read_bank(&p).unwrap(), g);
        assert_eq!(Container::read(&p).unwrap().get("seed"), Some("7"));

        let (re, im) = make_offspring(DescriptorKind::Gabor, 2, &g, None).unwrap();
        for set in [re, im] {
            let p = dir.path().join("o.mffc");
            write_offspring(&p, &set, &[]).unwrap();
            assert_eq!(read_offspring(&p).unwrap(), set);
        }

        let model = WpcaModel {
            mean: array![1.0, 2.0, 3.0],
            projection: array![[0.5, -1.0, 2.0], [1e-300, 3.5, f64::MAX]],
            eigenvalues: array![4.0, 1.0],
        };
        let p = dir.path().join("w.mffc");
        write_wpca(&p, &model, &[]).unwrap();
        assert_eq!(read_wpca(&p).unwrap(), model);
        assert!(read_bank(&p).is_err());
    }

    #[test]
    fn container_layout_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.mffc");
        let c = Container {
            header: vec![("a".into(), "1".into())],
            payload: vec![1.0, -2.5],
        };
        c.write(&p).unwrap();
        let bytes = fs::read(&p).unwrap();
        let mut want = b"MFFC1\na=1\n\n".to_vec();
        want.extend(1.0f64.to_le_bytes());
        want.extend((-2.5f64).to_le_bytes());
        assert_eq!(bytes, want);
    }

    #[test]
    fn store_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.bin");
        let rows = array![[0.25, 0.5], [1.0, -0.125], [0.0, 3.0]];
        let s = DescriptorStore::from_f64(&rows, "abc");
        s.write(&p).unwrap();
        let back = DescriptorStore::read(&p).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.to_f64(), rows);
        let bytes = fs::read(&p).unwrap();
        assert!(bytes.starts_with(b"MFFCD1\ncount=3\ndim=2\nconfig_hash=abc\n\n"));
    }

    #[test]
    fn manifest_roundtrip_and_checks() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        let m = DatasetManifest::new(
            vec![
                ManifestEntry { path: "a.pgm".into(), subject_id: "s1".into(), split: Split::Gallery, flip_of: None },
                ManifestEntry { path: "b.pgm".into(), subject_id: "s1".into(), split: Split::Fold(3), flip_of: None },
            ],
            dir.path(),
        )
        .unwrap();
        m.write(&p).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("path,subject_id,split\n"));
        let back = DatasetManifest::read(&p).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.fold_count(), 3);
        assert_eq!(back.resolve(&back.entries[0]), dir.path().join("a.pgm"));

        let dup = vec![m.entries[0].clone(), m.entries[0].clone()];
        assert!(DatasetManifest::new(dup, ".").is_err());
    }

    #[test]
    fn image_loading() {
        let dir = tempfile::tempdir().unwrap();
        let gray = array![[0.0, 17.0, 255.0], [128.0, 3.0, 99.0]];
        let p = dir.path().join("g.pgm");
        write_pgm(&p, &gray).unwrap();
        assert_eq!(load_image(&p, Some((2, 3))).unwrap(), gray);
        assert!(load_image(&p, Some((3, 2))).is_err());
        assert!(load_image(&dir.path().join("missing.pgm"), None).is_err());

        let white = Array2::from_elem((4, 4), 255.0);
        write_pgm(&p, &white).unwrap();
        assert_eq!(load_image(&p, None).unwrap(), white);

        let rgb = image::RgbImage::from_pixel(2, 1, image::Rgb([10, 20, 30]));
        let p = dir.path().join("c.png");
        rgb.save(&p).unwrap();
        let img = load_image(&p, None).unwrap();
        assert!((img[[0, 0]] - 18.15).abs() < 1e-12);

        let bad = dir.path().join("bad.pgm");
        fs::write(&bad, b"P5\n4 4\n255\n\x01").unwrap();
        assert!(load_image(&bad, None).is_err());
    }
}
