use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use mffc::conv::{convolve_many, Backend};
use mffc::eval::{kfold_verify, rank1_identify, EvalReport, Pair};
use mffc::gabor::condensed_ensemble;
use mffc::io::{
    hflip, load_image, read_bank, read_offspring, read_wpca, write_atomic, write_bank, write_offspring, write_wpca,
    DatasetManifest, DescriptorStore, Split,
};
use mffc::synth::{fold_pairs, synth_corpus, SplitScheme, SynthOptions};
use mffc::wpca::fit_wpca;
use mffc::{DescriptorKind, Extractor, PipelineConfig};
use ndarray::{Array2, Axis};
use rayon::prelude::*;

#[derive(Parser, Debug)]
#[command(name = "mffc", version, about = "Multi-fold filter convolution face descriptors")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Debug)]
struct Common {
    /// key=value config file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Named preset (feret1, feret2, ar, lfw_a, lfw_hpen, ytf)
    #[arg(long, global = true)]
    preset: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// gabor, gabor-pca or gabor-ica
    #[arg(long, global = true)]
    kind: Option<String>,
    /// Number of convolution folds M
    #[arg(long, global = true)]
    folds: Option<usize>,
    /// direct, fft or auto
    #[arg(long, global = true)]
    backend: Option<String>,
    #[arg(long, global = true, env = "MFFC_THREADS")]
    threads: Option<usize>,
    /// Extra config override, repeatable
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    sets: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Generate a synthetic corpus with its manifest
    Synth(SynthArgs),
    /// Learn the PCA/ICA bank for the configured kind (or write the Gabor bank)
    LearnFilters {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the real and imaginary offspring sets into a directory
    MakeOffspring {
        /// Learned bank for gabor-pca / gabor-ica
        #[arg(long)]
        filters: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Describe every manifest image into a descriptor store
    Describe {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Offspring directory from make-offspring
        #[arg(long, conflicts_with = "filters")]
        offspring: Option<PathBuf>,
        /// Learned bank, used when no offspring directory is given
        #[arg(long)]
        filters: Option<PathBuf>,
        /// Describe horizontally flipped images
        #[arg(long)]
        flip: bool,
    },
    /// Fit whitening PCA on training descriptors
    FitWpca {
        #[arg(long)]
        descriptors: PathBuf,
        /// Flipped descriptors added to the training set
        #[arg(long)]
        flipped: Option<PathBuf>,
        /// Restricts training rows to the `train` split when it exists
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank-1 identification of probes against the gallery
    EvalIdent {
        #[arg(long)]
        descriptors: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        wpca: Option<PathBuf>,
        #[arg(long, default_value = "gallery")]
        gallery_split: String,
        #[arg(long, default_value = "probe")]
        probe_split: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// k-fold pair verification; writes report.txt, folds.csv and roc.csv
    EvalVerify {
        #[arg(long)]
        descriptors: PathBuf,
        #[arg(long)]
        flipped: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// CSV with header fold,path_a,path_b,same
        #[arg(long)]
        pairs: PathBuf,
        /// Skip per-fold whitening PCA
        #[arg(long)]
        no_wpca: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Time direct against FFT convolution
    BenchConv {
        /// Square image sides
        #[arg(long, value_delimiter = ',', default_value = "32,64,128,256")]
        sizes: Vec<usize>,
        /// Kernel sides
        #[arg(long, value_delimiter = ',', default_value = "7,13,19")]
        kernels: Vec<usize>,
        /// Kernels per image
        #[arg(long, default_value_t = 36)]
        count: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 20)]
    classes: usize,
    #[arg(long, default_value_t = 10)]
    per_class: usize,
    /// HxW
    #[arg(long, default_value = "64x64")]
    size: String,
    #[arg(long, default_value_t = 10.0)]
    noise: f64,
    /// Gallery images per class
    #[arg(long, default_value_t = 1, conflicts_with = "verify_folds")]
    gallery: usize,
    /// Deal classes into k folds and write pairs.csv instead of gallery/probe
    #[arg(long)]
    verify_folds: Option<usize>,
    #[arg(long, default_value_t = 50)]
    pairs_per_fold: usize,
}

fn build_config(c: &Common) -> Result<PipelineConfig> {
    let mut cfg = match &c.config {
        Some(p) => PipelineConfig::load(p).with_context(|| format!("reading config {}", p.display()))?,
        None => PipelineConfig::default(),
    };
    if let Some(p) = &c.preset {
        cfg.set("preset", p)?;
    }
    for kv in &c.sets {
        let (k, v) = kv.split_once('=').with_context(|| format!("--set expects KEY=VALUE, got {kv}"))?;
        cfg.set(k, v)?;
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(k) = &c.kind {
        cfg.set("kind", k)?;
    }
    if let Some(m) = c.folds {
        cfg.folds = m;
    }
    if let Some(b) = &c.backend {
        cfg.set("backend", b)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_images(m: &DatasetManifest, size: Option<(usize, usize)>) -> Result<Vec<Array2<f64>>> {
    m.entries
        .par_iter()
        .map(|e| {
            let p = m.resolve(e);
            load_image(&p, size).with_context(|| format!("loading {}", p.display()))
        })
        .collect()
}

fn read_manifest(p: &Path) -> Result<DatasetManifest> {
    DatasetManifest::read(p).with_context(|| format!("reading manifest {}", p.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, |w| std::io::Write::write_all(w, text.as_bytes()))?;
    Ok(())
}

fn parse_split(s: &str) -> Result<Split> {
    Split::parse(s).with_context(|| format!("unknown split {s}"))
}

fn extractor(cfg: &PipelineConfig, offspring: Option<&Path>, filters: Option<&Path>) -> Result<Extractor> {
    if let Some(dir) = offspring {
        let re = read_offspring(&dir.join("offspring_re.mffc"))?;
        let im = read_offspring(&dir.join("offspring_im.mffc"))?;
        return Ok(Extractor::from_offspring(re, im, cfg)?);
    }
    let learned = filters.map(read_bank).transpose()?;
    Ok(Extractor::new(cfg, learned.as_ref())?)
}

fn provenance(cfg: &PipelineConfig) -> Vec<(&'static str, String)> {
    vec![
        ("seed", cfg.seed.to_string()),
        ("config_hash", cfg.hash()),
    ]
}

fn synth(cfg: &PipelineConfig, a: &SynthArgs) -> Result<()> {
    let (h, w) = a
        .size
        .split_once('x')
        .and_then(|(h, w)| Some((h.parse().ok()?, w.parse().ok()?)))
        .with_context(|| format!("--size expects HxW, got {}", a.size))?;
    let mut opts = SynthOptions::new(a.classes, a.per_class, (h, w), cfg.seed);
    opts.noise_sigma = a.noise;
    opts.split = match a.verify_folds {
        Some(k) => SplitScheme::Folds(k),
        None => SplitScheme::GalleryProbe { gallery: a.gallery },
    };
    let corpus = synth_corpus(&opts)?;
    let manifest = corpus.write(&a.out)?;
    if a.verify_folds.is_some() {
        let folds = fold_pairs(&corpus.labels, &corpus.splits, a.pairs_per_fold, cfg.seed.wrapping_add(1))?;
        let mut csv = String::from("fold,path_a,path_b,same\n");
        for (f, pairs) in folds.iter().enumerate() {
            for p in pairs {
                csv.push_str(&format!(
                    "{},{},{},{}\n",
                    f + 1,
                    manifest.entries[p.a].path,
                    manifest.entries[p.b].path,
                    u8::from(p.same)
                ));
            }
        }
        write_text(&a.out.join("pairs.csv"), &csv)?;
    }
    println!("synth: {} images of {h}x{w} in {}", corpus.len(), a.out.display());
    Ok(())
}

fn learn_filters(cfg: &PipelineConfig, manifest: &Path, out: &Path) -> Result<()> {
    let bank = match cfg.kind {
        DescriptorKind::Gabor => condensed_ensemble(&cfg.gabor)?,
        _ => {
            let m = read_manifest(manifest)?;
            let train = m.indices_of(&Split::Train);
            let images = load_images(&m, cfg.image_size)?;
            let images: Vec<Array2<f64>> = if train.is_empty() {
                images
            } else {
                train.iter().map(|&i| images[i].clone()).collect()
            };
            info!("sampling {} patches from {} images", cfg.patches, images.len());
            mffc::pipeline::learn_bank(cfg, &images)?.expect("learned kind")
        }
    };
    write_bank(out, &bank, &provenance(cfg))?;
    println!("learn-filters: {} bank of {} filters ({}x{}) -> {}", bank.kind().name(), bank.len(), bank.support(), bank.support(), out.display());
    Ok(())
}

fn make_offspring_cmd(cfg: &PipelineConfig, filters: Option<&Path>, out: &Path) -> Result<()> {
    let ex = extractor(cfg, None, filters)?;
    std::fs::create_dir_all(out)?;
    let prov = provenance(cfg);
    write_offspring(&out.join("offspring_re.mffc"), &ex.offspring_re, &prov)?;
    write_offspring(&out.join("offspring_im.mffc"), &ex.offspring_im, &prov)?;
    println!(
        "make-offspring: {} offspring ({} unique) of side {} -> {}",
        ex.offspring_re.len(),
        ex.offspring_re.unique_count(),
        ex.offspring_re.side(),
        out.display()
    );
    Ok(())
}

fn describe(
    cfg: &PipelineConfig,
    manifest: &Path,
    out: &Path,
    offspring: Option<&Path>,
    filters: Option<&Path>,
    flip: bool,
) -> Result<()> {
    let ex = extractor(cfg, offspring, filters)?;
    let m = read_manifest(manifest)?;
    let mut images = load_images(&m, cfg.image_size)?;
    if flip {
        images = images.iter().map(hflip).collect();
    }
    let t = Instant::now();
    let d = ex.describe_batch(&images)?;
    DescriptorStore::from_f64(&d, cfg.hash()).write(out)?;
    let mut sidecar = out.as_os_str().to_owned();
    sidecar.push(".csv");
    let labels = DatasetManifest::new(m.entries.clone(), m.root.clone())?;
    labels.write(Path::new(&sidecar))?;
    println!(
        "describe: {} images -> {} dims (raw {}) in {:.2?} -> {}",
        images.len(),
        d.ncols(),
        ex.raw_dim(),
        t.elapsed(),
        out.display()
    );
    Ok(())
}

fn read_store(p: &Path) -> Result<DescriptorStore> {
    DescriptorStore::read(p).with_context(|| format!("reading descriptors {}", p.display()))
}

fn fit_wpca_cmd(cfg: &PipelineConfig, descriptors: &Path, flipped: Option<&Path>, manifest: Option<&Path>, out: &Path) -> Result<()> {
    let d = read_store(descriptors)?.to_f64();
    let rows: Vec<usize> = match manifest {
        Some(p) => {
            let m = read_manifest(p)?;
            if m.entries.len() != d.nrows() {
                bail!("manifest has {} entries, store has {} rows", m.entries.len(), d.nrows());
            }
            let train = m.indices_of(&Split::Train);
            if train.is_empty() {
                (0..d.nrows()).collect()
            } else {
                train
            }
        }
        None => (0..d.nrows()).collect(),
    };
    let mut train = d.select(Axis(0), &rows);
    if let Some(f) = flipped {
        let fd = read_store(f)?.to_f64();
        if fd.dim() != d.dim() {
            bail!("flipped store shape {:?} differs from {:?}", fd.dim(), d.dim());
        }
        train.append(Axis(0), fd.select(Axis(0), &rows).view())?;
    }
    let model = fit_wpca(&train, cfg.wpca_q)?;
    write_wpca(out, &model, &provenance(cfg))?;
    println!("fit-wpca: {} -> {} dims from {} rows -> {}", model.dim_in(), model.dim_out(), train.nrows(), out.display());
    Ok(())
}

fn eval_ident(
    cfg: &PipelineConfig,
    descriptors: &Path,
    manifest: &Path,
    wpca: Option<&Path>,
    gallery_split: &str,
    probe_split: &str,
    out: &Path,
) -> Result<()> {
    let store = read_store(descriptors)?;
    let mut d = store.to_f64();
    let m = read_manifest(manifest)?;
    if m.entries.len() != d.nrows() {
        bail!("manifest has {} entries, store has {} rows", m.entries.len(), d.nrows());
    }
    if let Some(p) = wpca {
        d = read_wpca(p)?.project_rows(&d)?;
    }
    let g = m.indices_of(&parse_split(gallery_split)?);
    let p = m.indices_of(&parse_split(probe_split)?);
    let labels = |idx: &[usize]| idx.iter().map(|&i| m.entries[i].subject_id.clone()).collect::<Vec<_>>();
    let id = rank1_identify(&d.select(Axis(0), &g), &labels(&g), &d.select(Axis(0), &p), &labels(&p))?;
    let report = EvalReport::identification(id.rank1, cfg.hash());
    write_text(out, &report.to_text())?;
    println!("eval-ident: rank-1 {:.2}% over {} probes, {} gallery -> {}", id.rank1, p.len(), g.len(), out.display());
    Ok(())
}

fn read_pairs(path: &Path, m: &DatasetManifest) -> Result<Vec<Vec<Pair>>> {
    let index: HashMap<&str, usize> = m.entries.iter().enumerate().map(|(i, e)| (e.path.as_str(), i)).collect();
    let text = std::fs::read_to_string(path).with_context(|| format!("reading pairs {}", path.display()))?;
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("fold,path_a,path_b,same") {
        bail!("{}: header must be fold,path_a,path_b,same", path.display());
    }
    let mut folds: Vec<Vec<Pair>> = Vec::new();
    for (no, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 4 {
            bail!("{} line {}: expected 4 fields", path.display(), no + 2);
        }
        let fold: usize = f[0].parse().with_context(|| format!("bad fold `{}`", f[0]))?;
        if fold == 0 {
            bail!("folds are numbered from 1");
        }
        let look = |p: &str| index.get(p).copied().with_context(|| format!("pair path {p} not in manifest"));
        let same = match f[3] {
            "1" | "true" => true,
            "0" | "false" => false,
            other => bail!("bad same flag `{other}`"),
        };
        if folds.len() < fold {
            folds.resize(fold, Vec::new());
        }
        folds[fold - 1].push(Pair { a: look(f[1])?, b: look(f[2])?, same });
    }
    Ok(folds)
}

#[allow(clippy::too_many_arguments)]
fn eval_verify(
    cfg: &PipelineConfig,
    descriptors: &Path,
    flipped: &Path,
    manifest: &Path,
    pairs: &Path,
    no_wpca: bool,
    out: &Path,
) -> Result<()> {
    let d = read_store(descriptors)?.to_f64();
    let f = read_store(flipped)?.to_f64();
    let m = read_manifest(manifest)?;
    if m.entries.len() != d.nrows() {
        bail!("manifest has {} entries, store has {} rows", m.entries.len(), d.nrows());
    }
    let folds = read_pairs(pairs, &m)?;
    let q = (!no_wpca).then_some(cfg.wpca_q);
    let report = kfold_verify(&d, &f, &folds, q, &cfg.hash())?;
    std::fs::create_dir_all(out)?;
    write_text(&out.join("report.txt"), &report.to_text())?;
    write_text(&out.join("folds.csv"), &report.folds_csv())?;
    write_text(&out.join("roc.csv"), &report.roc_csv())?;
    println!(
        "eval-verify: {} folds, ACC {:.2} +- {:.2}, AUC {:.2} -> {}",
        report.per_fold.len(),
        report.acc_mean.unwrap_or(f64::NAN),
        report.acc_sd.unwrap_or(f64::NAN),
        report.auc.unwrap_or(f64::NAN),
        out.display()
    );
    Ok(())
}

fn bench_conv(cfg: &PipelineConfig, sizes: &[usize], kernels: &[usize], count: usize, out: Option<&Path>) -> Result<()> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut table = String::from("size,kernel,count,direct_ms,fft_ms,auto_picks\n");
    println!("{:>6} {:>6} {:>6} {:>12} {:>12} {:>6}", "size", "kernel", "count", "direct_ms", "fft_ms", "auto");
    for &n in sizes {
        for &k in kernels {
            let img = Array2::from_shape_fn((n, n), |_| rng.random_range(0.0..255.0));
            let ks: Vec<Array2<f64>> = (0..count).map(|_| Array2::from_shape_fn((k, k), |_| rng.random_range(-1.0..1.0))).collect();
            let refs: Vec<&Array2<f64>> = ks.iter().collect();
            let time = |b: Backend| {
                let t = Instant::now();
                let r = convolve_many(&img, &refs, b);
                std::hint::black_box(r);
                t.elapsed().as_secs_f64() * 1e3
            };
            let (direct, fft) = (time(Backend::Direct), time(Backend::Fft));
            let auto = if cfg.backend.use_fft(n, n, k) { "fft" } else { "direct" };
            println!("{n:>6} {k:>6} {count:>6} {direct:>12.3} {fft:>12.3} {auto:>6}");
            table.push_str(&format!("{n},{k},{count},{direct:.3},{fft:.3},{auto}\n"));
        }
    }
    if let Some(p) = out {
        write_text(p, &table)?;
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.common.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let cfg = build_config(&cli.common)?;
    info!("config hash {}", cfg.hash());
    match &cli.cmd {
        Cmd::Synth(a) => synth(&cfg, a),
        Cmd::LearnFilters { manifest, out } => learn_filters(&cfg, manifest, out),
        Cmd::MakeOffspring { filters, out } => make_offspring_cmd(&cfg, filters.as_deref(), out),
        Cmd::Describe { manifest, out, offspring, filters, flip } => {
            describe(&cfg, manifest, out, offspring.as_deref(), filters.as_deref(), *flip)
        }
        Cmd::FitWpca { descriptors, flipped, manifest, out } => {
            fit_wpca_cmd(&cfg, descriptors, flipped.as_deref(), manifest.as_deref(), out)
        }
        Cmd::EvalIdent { descriptors, manifest, wpca, gallery_split, probe_split, out } => {
            eval_ident(&cfg, descriptors, manifest, wpca.as_deref(), gallery_split, probe_split, out)
        }
        Cmd::EvalVerify { descriptors, flipped, manifest, pairs, no_wpca, out } => {
            eval_verify(&cfg, descriptors, flipped, manifest, pairs, *no_wpca, out)
        }
        Cmd::BenchConv { sizes, kernels, count, out } => bench_conv(&cfg, sizes, kernels, *count, out.as_deref()),
    }
}

