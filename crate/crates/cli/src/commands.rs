use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use facetrank_core::corpus::{
    load_profiles, load_sessions, synth_corpus, time_split, write_profiles, write_sessions, Namespace, ProfileStore,
    SessionStore, SynthConfig,
};
use facetrank_core::entity_graph::{build_graph_with_threshold, WeightedGraph};
use facetrank_core::evaluation::{replay, ReplayConfig};
use facetrank_core::graph_embed::{
    concat_embeddings, train_first_order, train_second_order, EmbedConfig, EmbedMode, EmbeddingTable,
};
use facetrank_core::neural::TrainConfig;
use facetrank_core::ranker::{train_ranker_logged, EmbeddingTables, Feature, FeatureSchema, RankingModel};
use facetrank_core::seed::stage_seed;
use facetrank_core::semantic_match::{export_embeddings, train_dssm_logged, DssmConfig, DssmModel};
use facetrank_service::{InvertedIndex, SearchService, Snapshot};

use crate::args::{
    BuildGraphArgs, Command, EmbedOrder, EmbeddingArgs, EvaluateArgs, ExportArgs, ServeArgs, SynthArgs, TrainDssmArgs,
    TrainEmbedArgs, TrainRankerArgs,
};
use crate::{write_atomic, CliError};

pub fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Synth(a) => synth(a),
        Command::BuildGraph(a) => build_graph(a),
        Command::TrainEmbed(a) => train_embed(a),
        Command::TrainDssm(a) => train_dssm(a),
        Command::TrainRanker(a) => train_ranker(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Serve(a) => serve(a),
        Command::Export(a) => export(a),
    }
}

fn input(path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("input file {} does not exist", path.display())))
    }
}

fn output(path: &Path) -> Result<(), CliError> {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => return Ok(()),
    };
    if parent.is_dir() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("output directory {} does not exist", parent.display())))
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))
}

/// Writes to `out`, or to standard output when no path was given.
fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn profiles_text(store: &ProfileStore) -> Vec<u8> {
    let mut buf = Vec::new();
    write_profiles(store, &mut buf).expect("writing to memory");
    buf
}

fn sessions_text(store: &SessionStore) -> Vec<u8> {
    let mut buf = Vec::new();
    write_sessions(store, &mut buf).expect("writing to memory");
    buf
}

fn check_embedding_inputs(e: &EmbeddingArgs) -> Result<(), CliError> {
    e.paths().into_iter().try_for_each(|(_, p)| input(p))
}

fn load_tables(e: &EmbeddingArgs) -> Result<EmbeddingTables, CliError> {
    let mut tables = BTreeMap::new();
    for (ns, path) in e.paths() {
        let table = EmbeddingTable::read_text(ns, read(path)?.as_bytes())
            .map_err(|err| CliError::Data(format!("{}: {err}", path.display())))?;
        tables.insert(ns, table);
    }
    Ok(tables)
}

fn load_model(path: &Path) -> Result<RankingModel, CliError> {
    RankingModel::from_text(&read(path)?).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn synth(a: SynthArgs) -> Result<(), CliError> {
    if !(a.train_fraction > 0.0 && a.train_fraction < 1.0) {
        return Err(CliError::Usage("train-fraction must lie in (0, 1)".into()));
    }
    let d = SynthConfig::default();
    let config = SynthConfig {
        members: a.members.unwrap_or(d.members),
        sessions: a.sessions.unwrap_or(d.sessions),
        impressions_per_session: a.impressions.unwrap_or(d.impressions_per_session),
        clusters: a.clusters.unwrap_or(d.clusters),
        label_noise: a.label_noise.unwrap_or(d.label_noise),
        p_match: a.p_match.unwrap_or(d.p_match),
        p_mismatch: a.p_mismatch.unwrap_or(d.p_mismatch),
        ..d
    };
    let corpus = synth_corpus(&config, stage_seed(a.seed, "synth"))?;
    let (train, test) = time_split(&corpus.sessions, a.train_fraction)?;
    fs::create_dir_all(&a.out).map_err(|e| CliError::Data(format!("cannot create {}: {e}", a.out.display())))?;
    write_atomic(&a.out.join("profiles.jsonl"), &profiles_text(&corpus.profiles))?;
    write_atomic(&a.out.join("sessions.jsonl"), &sessions_text(&corpus.sessions))?;
    write_atomic(&a.out.join("train.jsonl"), &sessions_text(&train))?;
    write_atomic(&a.out.join("test.jsonl"), &sessions_text(&test))?;
    println!(
        "synth: {} members, {} sessions ({} train, {} test) in {}",
        corpus.profiles.len(),
        corpus.sessions.len(),
        train.len(),
        test.len(),
        a.out.display()
    );
    Ok(())
}

fn build_graph(a: BuildGraphArgs) -> Result<(), CliError> {
    input(&a.profiles)?;
    if let Some(o) = &a.out {
        output(o)?;
    }
    let profiles = load_profiles(&a.profiles)?;
    let graph = build_graph_with_threshold(&profiles, a.namespace, a.min_count);
    emit(a.out.as_deref(), &graph.to_edge_list())?;
    if a.out.is_some() {
        println!("build-graph: {} {} edges", graph.edges().count(), a.namespace);
    }
    Ok(())
}

fn embed_config(a: &TrainEmbedArgs) -> EmbedConfig {
    let base = match a.mode {
        EmbedMode::Exact => EmbedConfig::default(),
        EmbedMode::Sampled => EmbedConfig::sampled(),
    };
    EmbedConfig {
        dim: a.dim.unwrap_or(base.dim),
        learning_rate: a.learning_rate.unwrap_or(base.learning_rate),
        epochs: a.epochs.unwrap_or(base.epochs),
        negatives_per_edge: a.negatives.unwrap_or(base.negatives_per_edge),
        init_scale: a.init_scale.or(base.init_scale),
        line_search: a.line_search.unwrap_or(base.line_search),
        step_growth: a.step_growth.unwrap_or(base.step_growth),
        seed: stage_seed(a.seed, &format!("embed-{}", a.namespace)),
        mode: a.mode,
    }
}

fn train_embed(a: TrainEmbedArgs) -> Result<(), CliError> {
    input(&a.graph)?;
    if let Some(o) = &a.out {
        output(o)?;
    }
    let config = embed_config(&a);
    config.validate()?;
    let graph = WeightedGraph::read_edge_list(a.namespace, read(&a.graph)?.as_bytes())
        .map_err(|e| CliError::Data(format!("{}: {e}", a.graph.display())))?;
    // An edge list cannot carry isolated vertices; dropping them is a no-op kept for symmetry.
    let graph = graph.without_isolated();
    let table = match a.order {
        EmbedOrder::First => train_first_order(&graph, &config)?,
        EmbedOrder::Second => train_second_order(&graph, &config)?.0,
        EmbedOrder::Concat => {
            let first = train_first_order(&graph, &config)?;
            let (second, _) = train_second_order(&graph, &config)?;
            concat_embeddings(&first, &second)?
        }
    };
    emit(a.out.as_deref(), &table.to_text())?;
    if a.out.is_some() {
        println!("train-embed: {} vectors of dim {} ({})", table.len(), table.dim(), table.kind());
    }
    Ok(())
}

fn train_dssm(a: TrainDssmArgs) -> Result<(), CliError> {
    input(&a.profiles)?;
    input(&a.sessions)?;
    output(&a.out)?;
    let d = DssmConfig::default();
    let config = DssmConfig {
        hidden: a.hidden.map(|l| l.0).unwrap_or(d.hidden),
        output_dim: a.output_dim.unwrap_or(d.output_dim),
        similarity: a.similarity.unwrap_or(d.similarity),
        gamma: a.gamma.unwrap_or(d.gamma),
        negatives: a.negatives.unwrap_or(d.negatives),
        learning_rate: a.learning_rate.unwrap_or(d.learning_rate),
        epochs: a.epochs.unwrap_or(d.epochs),
        batch_size: a.batch_size.unwrap_or(d.batch_size),
        seed: stage_seed(a.seed, "dssm"),
    };
    config.validate()?;
    let profiles = load_profiles(&a.profiles)?;
    let sessions = load_sessions(&a.sessions)?;
    let (model, log) = train_dssm_logged(&sessions, &profiles, &config)?;
    write_atomic(&a.out, model.to_text().as_bytes())?;
    for (epoch, loss) in log.epoch_loss.iter().enumerate() {
        println!("epoch {}: loss {loss:.6}", epoch + 1);
    }
    println!("train-dssm: {} examples, input width {}", log.examples, model.layout.width());
    Ok(())
}

fn ranker_config(a: &TrainRankerArgs) -> TrainConfig {
    let d = TrainConfig::default();
    TrainConfig {
        objective: a.objective.unwrap_or(d.objective),
        hidden_layers: a.hidden.clone().map(|l| l.0).unwrap_or(d.hidden_layers),
        activation: a.activation.unwrap_or(d.activation),
        learning_rate: a.learning_rate.unwrap_or(d.learning_rate),
        epochs: a.epochs.unwrap_or(d.epochs),
        batch_size: a.batch_size.unwrap_or(d.batch_size),
        l2_penalty: a.l2.unwrap_or(d.l2_penalty),
        dropout_rate: a.dropout.unwrap_or(d.dropout_rate),
        early_stop_patience: a.patience.unwrap_or(d.early_stop_patience),
        seed: stage_seed(a.seed, "ranker"),
    }
}

fn train_ranker(a: TrainRankerArgs) -> Result<(), CliError> {
    input(&a.profiles)?;
    input(&a.sessions)?;
    check_embedding_inputs(&a.embeddings)?;
    output(&a.out)?;
    if !(0.0..1.0).contains(&a.valid_fraction) {
        return Err(CliError::Usage("valid-fraction must lie in [0, 1)".into()));
    }
    let config = ranker_config(&a);
    config.validate()?;
    let tables = load_tables(&a.embeddings)?;
    let schema = match &a.features {
        Some(names) => FeatureSchema::parse_names(names, a.pooling)?,
        None => {
            let mut f = FeatureSchema::syntactic().features().to_vec();
            f.extend(tables.keys().map(|&ns| Feature::EmbDot(ns)));
            FeatureSchema::new(f, a.pooling)?
        }
    };
    schema.check_tables(&tables)?;
    let profiles = load_profiles(&a.profiles)?;
    let sessions = load_sessions(&a.sessions)?;
    let (train, valid) = if a.valid_fraction > 0.0 && sessions.len() > 1 {
        time_split(&sessions, 1.0 - a.valid_fraction)?
    } else {
        (sessions, SessionStore::new())
    };
    let (model, log) = train_ranker_logged(&train, &valid, &profiles, &tables, &schema, &config)?;
    write_atomic(&a.out, model.to_text().as_bytes())?;
    for (epoch, loss) in log.train_loss.iter().enumerate() {
        match log.valid_loss.get(epoch) {
            Some(v) => println!("epoch {}: train {loss:.6} valid {v:.6}", epoch + 1),
            None => println!("epoch {}: train {loss:.6}", epoch + 1),
        }
    }
    println!(
        "train-ranker: {} on {} ({} train, {} validation sessions), best epoch {}",
        model.objective,
        schema.names(),
        train.len(),
        valid.len(),
        log.best_epoch
    );
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> Result<(), CliError> {
    input(&a.model)?;
    input(&a.profiles)?;
    input(&a.sessions)?;
    check_embedding_inputs(&a.embeddings)?;
    if let Some(r) = &a.report {
        output(r)?;
    }
    let model = load_model(&a.model)?;
    let tables = load_tables(&a.embeddings)?;
    model.schema.check_tables(&tables)?;
    let profiles = load_profiles(&a.profiles)?;
    let sessions = load_sessions(&a.sessions)?;
    let config = ReplayConfig {
        ks: a.k.0.clone(),
        denominator: a.denominator,
        keep_sessions: false,
    };
    let metrics = replay(|q, m| model.score(q, m, &tables), &sessions, &profiles, &config)?;
    print!("{}", metrics.to_table());
    if let Some(r) = &a.report {
        write_atomic(r, metrics.to_csv().as_bytes())?;
    }
    Ok(())
}

fn serve(a: ServeArgs) -> Result<(), CliError> {
    input(&a.model)?;
    input(&a.profiles)?;
    check_embedding_inputs(&a.embeddings)?;
    if a.retrieval_budget == 0 {
        return Err(CliError::Usage("retrieval-budget must be positive".into()));
    }
    let model = load_model(&a.model)?;
    let tables = load_tables(&a.embeddings)?;
    let profiles = load_profiles(&a.profiles)?;
    let index = InvertedIndex::build(&profiles, &tables, &model.schema)?;
    let snapshot = Snapshot::new(index, model, tables)?.with_retrieval_budget(a.retrieval_budget);
    let service = Arc::new(SearchService::new(snapshot));
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Data(format!("cannot start runtime: {e}")))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(a.addr)
            .await
            .map_err(|e| CliError::Data(format!("cannot bind {}: {e}", a.addr)))?;
        let local = listener.local_addr().map_err(|e| CliError::Data(e.to_string()))?;
        println!("serving {} members on http://{local}", profiles.len());
        facetrank_service::serve(listener, service)
            .await
            .map_err(|e| CliError::Data(format!("server error: {e}")))
    })
}

fn export(a: ExportArgs) -> Result<(), CliError> {
    input(&a.dssm)?;
    let model = DssmModel::from_text(&read(&a.dssm)?).map_err(|e| CliError::Data(format!("{}: {e}", a.dssm.display())))?;
    let tables = export_embeddings(&model)?;
    fs::create_dir_all(&a.out_dir)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", a.out_dir.display())))?;
    for ns in Namespace::ALL {
        let table = &tables[&ns];
        write_atomic(&a.out_dir.join(format!("{ns}.emb")), table.to_text().as_bytes())?;
        println!("export: {} {ns} vectors of dim {}", table.len(), table.dim());
    }
    Ok(())
}
