mod common;

use std::fs;

use molrange_core::encoding::{TokenDataset, Vocabulary};
use molrange_core::pipeline::{
    read_generated, run, stage_evaluate, Command, Overrides, PipelineConfig, Preset, GENERATED_HEADER,
};
use molrange_core::Error;
use molrange_nn::Checkpoint;

#[test]
fn full_pass_writes_every_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::pipeline_config(dir.path(), common::TINY);
    let report = common::run_pipeline(&cfg);
    run(Command::ExportDescriptors, &cfg, false).unwrap();
    for cmd in [
        Command::TrainEmbedder,
        Command::Embed,
        Command::TrainClassifier,
        Command::TrainGan,
        Command::Generate,
        Command::Evaluate,
        Command::ExportDescriptors,
    ] {
        for name in cmd.outputs() {
            assert!(cfg.paths.output(name).exists(), "{} missing {name}", cmd.name());
        }
    }
    assert_eq!(report.n_generated, 6);
    assert_eq!(read_generated(&cfg.paths.output("generated")).unwrap().len(), 6);

    let manifest = fs::read_to_string(cfg.paths.output("manifest")).unwrap();
    assert!(manifest.contains("count = 200\nvalid = 200\n"));
    assert!(manifest.contains("train = 160\ntest = 40\n"));
    let ds = TokenDataset::load(cfg.paths.output("dataset_cache")).unwrap();
    assert_eq!(ds.len(), 200);
    let vocab = Vocabulary::load(cfg.paths.output("vocab")).unwrap();
    assert!(vocab.len() > 4);

    let emb = Checkpoint::load(cfg.paths.output("embeddings")).unwrap();
    assert_eq!(emb.get("embeddings").unwrap().shape(), &[200, 150, 16]);
    let hist = fs::read_to_string(cfg.paths.output("gan_history")).unwrap();
    assert_eq!(hist.lines().count(), 4);
    let desc = fs::read_to_string(cfg.paths.output("descriptors")).unwrap();
    assert_eq!(desc.lines().count(), 201);

    let text = fs::read_to_string(cfg.paths.output("report")).unwrap();
    assert!(text.starts_with("n_generated = 6\n"));
    assert!(text.contains("preset = desk\n"));
    assert!(text.contains("embedder.model_dim = 16\n"));
}

#[test]
fn existing_outputs_need_force() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::pipeline_config(dir.path(), "");
    run(Command::ExportDescriptors, &cfg, false).unwrap();
    let r = run(Command::ExportDescriptors, &cfg, false);
    assert!(matches!(r, Err(Error::OutputExists(_))));
    run(Command::ExportDescriptors, &cfg, true).unwrap();
}

#[test]
fn stages_report_missing_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::pipeline_config(dir.path(), "");
    for cmd in [Command::Embed, Command::TrainClassifier, Command::TrainGan, Command::Generate, Command::Evaluate] {
        let r = run(cmd, &cfg, false);
        assert!(matches!(r, Err(Error::MissingCheckpoint(_))), "{}: {r:?}", cmd.name());
    }
}

#[test]
fn zero_count_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::pipeline_config(dir.path(), "generate.count = 0\n");
    run(Command::Generate, &cfg, false).unwrap();
    let text = fs::read_to_string(cfg.paths.output("generated")).unwrap();
    assert_eq!(text.trim_end(), GENERATED_HEADER);
    let report = stage_evaluate(&cfg).unwrap();
    assert_eq!(report.n_generated, 0);
}

#[test]
fn malformed_corpus_lines_are_counted() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c.smi");
    fs::write(&corpus, "CCO\nCCN\nC1CC1\nc1ccccc1\nCC(=O)O\nC((\nCCCC\nCOC\nCC#N\nCCCl\n").unwrap();
    let extra = format!("{}paths.corpus = {}\n", common::TINY, corpus.display());
    let cfg = common::pipeline_config(dir.path(), &extra);
    run(Command::TrainEmbedder, &cfg, false).unwrap();
    let manifest = fs::read_to_string(cfg.paths.output("manifest")).unwrap();
    assert!(manifest.contains("count = 10\nvalid = 9\n"), "{manifest}");
}

#[test]
fn full_size_preset_is_echoed_in_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "paths.corpus = {}\npaths.output_dir = {}\ngenerate.count = 0\n",
        common::data_dir().join("sample_corpus.smi").display(),
        dir.path().display()
    );
    let overrides = Overrides {
        preset: Some(Preset::Paper),
        ..Default::default()
    };
    let cfg = PipelineConfig::from_text(&text, dir.path(), &overrides).unwrap();
    run(Command::Generate, &cfg, false).unwrap();
    run(Command::Evaluate, &cfg, false).unwrap();
    let report = fs::read_to_string(cfg.paths.output("report")).unwrap();
    for line in [
        "preset = paper\n",
        "embedder.layers = 6\n",
        "embedder.heads = 8\n",
        "embedder.model_dim = 512\n",
        "embedder.ff_dim = 2048\n",
        "classifier.channels = 16,32,64,128,128,128,128\n",
        "classifier.dropout = 0.85\n",
        "gan.noise_dim = 512\n",
        "range.phi = 10\n",
    ] {
        assert!(report.contains(line), "missing {line:?} in\n{report}");
    }
}

#[test]
fn same_seed_gives_same_report() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = common::run_pipeline(&common::pipeline_config(a.path(), common::TINY));
    let rb = common::run_pipeline(&common::pipeline_config(b.path(), common::TINY));
    assert_eq!(ra, rb);
}

#[test]
fn config_errors_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let r = PipelineConfig::from_text("range.y_lb = 2\nrange.y_ub = 1\n", dir.path(), &Overrides::default());
    let msg = r.unwrap_err().to_string();
    assert!(msg.contains("range"), "{msg}");
    let r = PipelineConfig::from_text("embedder.bogus = 1\n", dir.path(), &Overrides::default());
    assert!(r.unwrap_err().to_string().contains("embedder.bogus"));
}
