use std::path::{Path, PathBuf};
use std::process::Command;

use sha2::{Digest, Sha256};

fn bosim() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bosim"))
}

fn experiments() -> Vec<PathBuf> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/experiments");
    let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
        .expect("docs/experiments")
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    files.sort();
    files
}

fn kind_of(text: &str) -> String {
    let v: toml::Value = toml::from_str(text).unwrap();
    v["kind"].as_str().unwrap().to_string()
}

fn run(kind: &str, config: &Path, out: &Path, extra: &[&str]) -> std::process::Output {
    bosim()
        .arg(kind)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

#[test]
fn shipped_experiments_run() {
    let tmp = tempfile::tempdir().unwrap();
    let files = experiments();
    assert!(files.len() >= 8, "found {}", files.len());
    for f in files {
        let text = std::fs::read_to_string(&f).unwrap();
        let kind = kind_of(&text);
        let out = tmp.path().join(f.file_stem().unwrap());
        let o = run(&kind, &f, &out, &["--threads", "1"]);
        assert!(o.status.success(), "{}: {}", f.display(), String::from_utf8_lossy(&o.stderr));

        let manifest: serde_json::Value =
            serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["command"], kind.as_str());
        let digest: String = Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect();
        assert_eq!(manifest["config_sha256"], digest.as_str());
        assert!(manifest["wall_time_seconds"].as_f64().unwrap() >= 0.0);
        assert_eq!(manifest["core_version"], manifest["bosim_version"]);
        let outputs = manifest["outputs"].as_array().unwrap();
        assert!(!outputs.is_empty());
        for name in outputs {
            let p = out.join(name.as_str().unwrap());
            assert!(std::fs::metadata(&p).unwrap().len() > 0, "{}", p.display());
        }
        // nothing but declared outputs and the manifest
        let on_disk = std::fs::read_dir(&out).unwrap().count();
        assert_eq!(on_disk, outputs.len() + 1, "{}", out.display());
    }
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "scan.toml",
        "kind = \"fi-scan\"\n[system]\nmodes = 6\n[hamiltonian]\nu = 0.0\n[scan]\nparticles = 8\nspecies = [2, 3]\nsamples = 300\n",
    );
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let c = tmp.path().join("c");
    for (dir, seed) in [(&a, "7"), (&b, "7"), (&c, "8")] {
        let o = run("fi-scan", &cfg, dir, &["--seed", seed]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for name in ["fi_records.csv", "fi_histogram.csv", "fi_summary.json"] {
        let x = std::fs::read(a.join(name)).unwrap();
        assert_eq!(x, std::fs::read(b.join(name)).unwrap(), "{name}");
    }
    assert_ne!(
        std::fs::read(a.join("fi_records.csv")).unwrap(),
        std::fs::read(c.join("fi_records.csv")).unwrap()
    );
    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 7);
}

#[test]
fn malformed_config_exits_2_without_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        ("syntax.toml", "evolve", "kind = \"evolve\"\n[system\nmodes = 2\n"),
        ("type.toml", "evolve", "kind = \"evolve\"\n[system]\nmodes = \"two\"\n"),
        ("unknown.toml", "hom", "kind = \"hom\"\ncolour = \"red\"\n"),
        ("kind.toml", "dft", "kind = \"hom\"\n"),
        (
            "site.toml",
            "evolve",
            "[system]\nmodes = 2\nspecies = 1\n[hamiltonian]\n[[states]]\nfock = \"1:1^2\"\n\
             [[observables]]\nkind = \"density\"\nsite = 3\n[time]\nstop = 1.0\nstep = 0.1\n",
        ),
    ];
    for (file, kind, body) in cases {
        let cfg = write_config(tmp.path(), file, body);
        let out = tmp.path().join(format!("out-{file}"));
        let o = run(kind, &cfg, &out, &[]);
        assert_eq!(o.status.code(), Some(2), "{file}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(!out.exists(), "{file} left output behind");
    }
    let o = run("hom", &tmp.path().join("missing.toml"), &tmp.path().join("x"), &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn resource_limit_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "big.toml",
        "kind = \"evolve\"\n[system]\nmodes = 30\nspecies = 3\n[hamiltonian]\nu = 1.0\n\
         [[states]]\nfock = \"1:1^10 2:2^10 3:3^10\"\n[[observables]]\nkind = \"density\"\nsite = 1\n\
         [time]\nstop = 1.0\nstep = 0.1\n",
    );
    let out = tmp.path().join("out");
    let o = run("evolve", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!out.exists());
}

#[test]
fn overflow_exits_4() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "num.toml",
        "kind = \"evolve\"\n[system]\nmodes = 2\nspecies = 1\n[hamiltonian]\nj = 1e308\nu = 1e308\n\
         [[states]]\nfock = \"1:1^2\"\n[[observables]]\nkind = \"density-squared\"\nsite = 1\n\
         [time]\nstop = 1.0\nstep = 0.5\n",
    );
    let out = tmp.path().join("out");
    let o = run("evolve", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!out.exists());
}

#[test]
fn json_config_and_values() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "w.json",
        r#"{"kind": "weights", "system": {"modes": 2, "species": 2},
            "states": [{"label": "D", "fock": "1:1^4 2:2^4"}]}"#,
    );
    let out = tmp.path().join("out");
    let o = run("weights", &cfg, &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("weights.csv")).unwrap();
    let total: f64 = csv.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-10, "{csv}");
    assert!(csv.contains("D,5+3,0.4"), "{csv}");
}

#[test]
fn help_lists_subcommands() {
    let o = bosim().arg("--help").output().unwrap();
    let text = String::from_utf8_lossy(&o.stdout);
    for sub in ["hom", "evolve", "fi-scan", "probe", "spectrum-sweep", "dft", "blocks", "weights"] {
        assert!(text.contains(sub), "{sub} missing from help");
    }
}
