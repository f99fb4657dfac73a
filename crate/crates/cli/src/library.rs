//! On-disk sample library: `config.json` plus, per sample `k`,
//! `sample_k.meta`, `sample_k_snapshots.mat` and `sample_k_basis.mat`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use pmorkit_core::config::ExperimentConfig;
use pmorkit_core::interp::{Sample, SampleLibrary};
use pmorkit_core::io::{f64_list, meta_f64, parse_f64_list, read_matrix, read_meta, write_matrix, write_meta};
use pmorkit_core::params::ParameterSet;
use pmorkit_core::pod::{BasisOrigin, ProjectionBasis, SnapshotMatrix};
use pmorkit_core::{Error, Result};

pub fn save(dir: &Path, cfg: &ExperimentConfig, lib: &SampleLibrary<f64>) -> Result<()> {
    fs::create_dir_all(dir)?;
    cfg.save(&dir.join("config.json"))?;
    for (k, s) in lib.samples().iter().enumerate() {
        let mut meta = BTreeMap::new();
        meta.insert("names".to_string(), s.mu.names.join(","));
        meta.insert("values".to_string(), f64_list(&s.mu.values));
        meta.insert("initial_physical".to_string(), f64_list(&s.mu.initial_physical));
        meta.insert("dt".to_string(), format!("{:.17e}", s.snapshots.dt));
        meta.insert("q".to_string(), s.basis.q().to_string());
        meta.insert("singular_values".to_string(), f64_list(&s.basis.singular_values));
        write_meta(&dir.join(format!("sample_{k}.meta")), &meta)?;
        write_matrix(&dir.join(format!("sample_{k}_snapshots.mat")), &s.snapshots.data)?;
        write_matrix(&dir.join(format!("sample_{k}_basis.mat")), &s.basis.v)?;
    }
    Ok(())
}

fn entry<'a>(meta: &'a BTreeMap<String, String>, key: &str) -> Result<&'a str> {
    meta.get(key)
        .map(String::as_str)
        .ok_or_else(|| Error::Parse(format!("sample metadata key '{key}' missing")))
}

pub fn load(dir: &Path) -> Result<(ExperimentConfig, SampleLibrary<f64>)> {
    let cfg = ExperimentConfig::load(&dir.join("config.json"))?;
    let mut samples = Vec::new();
    for k in 0.. {
        let path = dir.join(format!("sample_{k}.meta"));
        if !path.exists() {
            break;
        }
        let meta = read_meta(&path)?;
        let mu = ParameterSet {
            names: entry(&meta, "names")?.split(',').map(str::to_string).collect(),
            values: parse_f64_list(entry(&meta, "values")?)?,
            initial_physical: parse_f64_list(entry(&meta, "initial_physical")?)?,
        };
        mu.validate()?;
        let d = read_matrix(&dir.join(format!("sample_{k}_snapshots.mat")))?;
        let v = read_matrix(&dir.join(format!("sample_{k}_basis.mat")))?;
        samples.push(Sample {
            snapshots: SnapshotMatrix::new(d, Some(mu.clone()), meta_f64(&meta, "dt")?)?,
            basis: ProjectionBasis {
                v,
                singular_values: parse_f64_list(entry(&meta, "singular_values")?)?,
                origin: BasisOrigin::Sample(mu.clone()),
                warnings: Vec::new(),
            },
            mu,
        });
    }
    if samples.is_empty() {
        return Err(Error::InvalidInput(format!("no samples found in {}", dir.display())));
    }
    Ok((cfg, SampleLibrary::new(samples)?))
}
