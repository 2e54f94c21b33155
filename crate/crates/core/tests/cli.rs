use std::fs;
use std::path::Path;
use std::process::Command;

use schrodmix::config::{load_config, save_config, ExperimentConfig, ExperimentKind, ExperimentSpec, InitialData};
use schrodmix::run::{RunManifest, MANIFEST_FILE};

fn schrodmix(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_schrodmix"))
        .args(args)
        .env("SCHRODMIX_WORKERS", "2")
        .output()
        .expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

fn manifest(dir: &Path) -> RunManifest {
    serde_json::from_slice(&fs::read(dir.join(MANIFEST_FILE)).unwrap()).unwrap()
}

#[test]
fn saturate_from_the_command_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "sat.cfg", "[experiment]\nkind = saturate\ngenerators = 0, 1\niterations = 3\n");
    let out = dir.path().join("out");
    let (code, err) = schrodmix(&["saturate", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", "5"]);
    assert_eq!(code, 0, "{err}");
    let v: serde_json::Value = serde_json::from_slice(&fs::read(out.join("saturation.json")).unwrap()).unwrap();
    let set: Vec<i64> = serde_json::from_value(v["set"].clone()).unwrap();
    assert_eq!(set, (-3..=4).collect::<Vec<_>>());
    let m = manifest(&out);
    assert_eq!(m.seed, 5);
    assert_eq!(m.kind, "saturate");
}

#[test]
fn exit_codes_are_distinct() {
    let dir = tempfile::tempdir().unwrap();
    let bad_q = write(dir.path(), "q.cfg", "[noise]\nhaar_q = 1\n[experiment]\nkind = mix\n");
    let (code, err) = schrodmix(&["mix", "--config", &bad_q]);
    assert_eq!(code, 2);
    assert!(err.contains("q > 1"), "{err}");

    let bad_dt = write(dir.path(), "dt.cfg", "[solver]\ndt = 0.003\n[experiment]\nkind = simulate\n");
    let (code, err) = schrodmix(&["simulate", "--config", &bad_dt]);
    assert_eq!(code, 2);
    assert!(err.contains("SolverConfig invariant"), "{err}");

    let (code, _) = schrodmix(&["simulate", "--config", dir.path().join("missing.cfg").to_str().unwrap()]);
    assert_eq!(code, 4);

    let huge = write(
        dir.path(),
        "huge.cfg",
        "[solver]\nn_points = 32\nk_max = 10\n[experiment]\nkind = simulate\nhorizon = 0.0078125\nforced = false\n\
         store_stride = 1\ninitial = plane\ninitial_mode = 1\ninitial_amplitude = 1000000\n",
    );
    let out = dir.path().join("huge");
    let (code, err) = schrodmix(&["simulate", "--config", &huge, "--out", out.to_str().unwrap()]);
    assert_eq!(code, 3, "{err}");
}

#[test]
fn manifest_reproduces_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let text = "seed = 21\n[solver]\nn_points = 32\nk_max = 10\n[experiment]\nkind = simulate\nhorizon = 2\nstore_stride = 64\n";
    let cfg = write(dir.path(), "sim.cfg", text);
    let first = dir.path().join("first");
    assert_eq!(schrodmix(&["simulate", "--config", &cfg, "--out", first.to_str().unwrap()]).0, 0);
    let m1 = manifest(&first);
    let names: Vec<&str> = m1.outputs.iter().map(|o| o.name.as_str()).collect();
    assert_eq!(names, ["trajectory.csv", "trajectory.bin", "norms.csv"]);

    // Rerun from the config text stored in the manifest.
    let again = write(dir.path(), "again.cfg", &m1.config);
    let second = dir.path().join("second");
    assert_eq!(schrodmix(&["simulate", "--config", &again, "--out", second.to_str().unwrap()]).0, 0);
    let m2 = manifest(&second);
    assert_eq!(m1.config_digest, m2.config_digest);
    assert_eq!(m1.outputs, m2.outputs);
    for o in &m1.outputs {
        assert_eq!(fs::read(first.join(&o.name)).unwrap(), fs::read(second.join(&o.name)).unwrap());
    }
}

#[test]
fn saved_configs_load_back() {
    let dir = tempfile::tempdir().unwrap();
    for kind in ExperimentKind::ALL {
        let mut cfg = ExperimentConfig::default_for(kind);
        cfg.seed = 1234;
        cfg.output_dir = dir.path().join(kind.name());
        if let ExperimentSpec::Simulate { initial, .. } = &mut cfg.experiment {
            *initial = InitialData::Plane { mode: -2, amplitude: 0.25 };
        }
        let path = dir.path().join(format!("{kind}.cfg"));
        save_config(&cfg, &path).unwrap();
        let back = load_config(&path, Some(kind)).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.digest(), cfg.digest());
    }
}
