use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use cipx::asp::{format_model, limit_from_env, parse_program, stable_models, Semantics};
use cipx::constraints::{load_constraints, ConstraintSet};
use cipx::emitter::{emit_cip, EmitterOptions};
use cipx::engine::{
    enumerate_counterfactuals, explanations_of, format_explanation, format_version, min_change_versions, xresp,
    EngineOptions, Enumeration,
};
use cipx::naive_bayes::{
    classify_exact, classify_staged, load_model, to_percent, train, Classifier, NaiveBayesModel, PercentModel,
    DEFAULT_MAXINT,
};
use cipx::query::{answer, format_answers, models_of, parse_query_file, signature};
use cipx::schema::{load_dataset, load_schema, parse_entity, Entity};

#[derive(Parser)]
#[command(name = "cipx", version, about = "Counterfactual explanations for naive-Bayes classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a classifier and save it as a model file.
    Train {
        #[command(flatten)]
        source: Source,
        /// Where to write the model.
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the label and both numerators of an entity.
    Classify {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Print the counterfactual versions of an entity.
    Counterfactuals {
        #[command(flatten)]
        run: RunArgs,
        /// Keep only versions with the fewest changed features.
        #[arg(long)]
        min_change: bool,
    },
    /// Print responsibility scores and explanation tuples.
    Explain {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Answer the queries in a file over the counterfactual models.
    Query {
        #[command(flatten)]
        run: RunArgs,
        /// File holding one or more queries, each ending in `?`.
        queries: PathBuf,
        #[arg(long, conflicts_with = "cautious")]
        brave: bool,
        #[arg(long)]
        cautious: bool,
    },
    /// Print the intervention program for an entity.
    EmitDlv {
        #[command(flatten)]
        run: RunArgs,
        /// Append the weak constraints that prefer fewer changes.
        #[arg(long)]
        weak: bool,
        /// Leave out forbidden-combination and dependency rules.
        #[arg(long)]
        no_domain_rules: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the stable models of a ground program.
    SolveAsp {
        program: PathBuf,
    },
}

/// Where the classifier comes from: a saved model or a training table.
#[derive(Args)]
struct Source {
    /// Training table (CSV, class in the last column).
    #[arg(long, required_unless_present = "model")]
    data: Option<PathBuf>,
    /// Schema file fixing domain order, labels and the class.
    #[arg(long, requires = "data")]
    schema: Option<PathBuf>,
    /// Class label treated as positive.
    #[arg(long, requires = "data")]
    positive: Option<String>,
    /// A model file written by `train`.
    #[arg(long, conflicts_with = "data")]
    model: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: Source,
    /// Comma-separated feature values in schema order.
    #[arg(long)]
    entity: String,
    #[arg(long, default_value = "e")]
    eid: String,
    /// Forbidden combinations, dependencies and immutable features.
    #[arg(long)]
    constraints: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Mode::Staged)]
    classifier: Mode,
    /// Integer ceiling for staged arithmetic.
    #[arg(long, default_value_t = DEFAULT_MAXINT)]
    maxint: u64,
    /// Only explain positive entities and veto forbidden originals.
    #[arg(long)]
    strict_paper: bool,
    /// Let a feature be changed again after its first intervention.
    #[arg(long)]
    allow_reintervention: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Staged,
    Exact,
}

struct Loaded {
    exact: NaiveBayesModel,
    percent: PercentModel,
    entity: Entity,
    constraints: ConstraintSet,
    mode: Mode,
    options: EngineOptions,
}

impl Loaded {
    fn classifier(&self) -> &dyn Classifier {
        match self.mode {
            Mode::Staged => &self.percent,
            Mode::Exact => &self.exact,
        }
    }

    fn enumerate(&self) -> Result<Enumeration> {
        Ok(enumerate_counterfactuals(self.classifier(), &self.entity, &self.constraints, &self.options)?)
    }
}

fn load_source(source: &Source) -> Result<NaiveBayesModel> {
    if let Some(path) = &source.model {
        return Ok(load_model(path)?);
    }
    let data = source.data.as_ref().expect("clap requires --data or --model");
    let schema_file = source.schema.as_ref().map(load_schema).transpose()?;
    let mut dataset = load_dataset(data, schema_file.as_ref().map(|s| &s.schema))?;
    let class_positive = schema_file.and_then(|s| s.class).map(|c| {
        let [pos, _] = c.labels;
        pos
    });
    if let Some(pos) = source.positive.clone().or(class_positive) {
        dataset = dataset.with_positive(&pos)?;
    }
    Ok(train(&dataset)?)
}

fn load(run: &RunArgs) -> Result<Loaded> {
    if run.maxint < 1 {
        bail!("--maxint must be positive");
    }
    let exact = load_source(&run.source)?;
    let percent = to_percent(&exact).with_ceiling(run.maxint);
    let entity = parse_entity(&run.entity, exact.schema(), &run.eid)?;
    let constraints = match &run.constraints {
        Some(path) => load_constraints(path, exact.schema())?,
        None => ConstraintSet::empty(),
    };
    Ok(Loaded {
        exact,
        percent,
        entity,
        constraints,
        mode: run.classifier,
        options: EngineOptions {
            strict_paper: run.strict_paper,
            allow_reintervention: run.allow_reintervention,
        },
    })
}

fn write_text(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("cannot write {}", path.display())),
        None => {
            std::io::stdout().lock().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn lines(rows: impl IntoIterator<Item = String>) -> String {
    rows.into_iter().map(|r| r + "\n").collect()
}

fn execute(cli: Cli) -> Result<String> {
    Ok(match cli.command {
        Command::Train { source, out } => {
            let model = load_source(&source)?;
            model.save(&out)?;
            String::new()
        }
        Command::Classify { run } => {
            let l = load(&run)?;
            let labels = l.exact.labels().clone();
            let (label, nums): (String, [String; 2]) = match l.mode {
                Mode::Staged => {
                    let o = classify_staged(&l.percent, &l.entity)?;
                    (o.label, o.numerators.map(|n| n.to_string()))
                }
                Mode::Exact => {
                    let o = classify_exact(&l.exact, &l.entity)?;
                    (o.label, o.numerators.map(|n| n.to_string()))
                }
            };
            lines([
                format!("{} {label}", l.entity.eid()),
                format!("{}: {}", labels[0], nums[0]),
                format!("{}: {}", labels[1], nums[1]),
            ])
        }
        Command::Counterfactuals { run, min_change } => {
            let l = load(&run)?;
            let found = l.enumerate()?;
            let versions = if min_change {
                min_change_versions(&found.versions)
            } else {
                found.versions
            };
            lines(versions.iter().map(format_version))
        }
        Command::Explain { run } => {
            let l = load(&run)?;
            let schema = l.exact.schema();
            let found = l.enumerate()?;
            let xs = explanations_of(schema, &found.versions, &found.original);
            let report = xresp(&xs, schema, l.entity.eid());
            let mut out = report.to_string();
            if !out.is_empty() && !out.ends_with('\n') {
                out.push('\n');
            }
            out + &lines(xs.iter().map(format_explanation))
        }
        Command::Query {
            run,
            queries,
            brave: _,
            cautious,
        } => {
            let l = load(&run)?;
            let text = fs::read_to_string(&queries).with_context(|| format!("cannot read {}", queries.display()))?;
            let parsed = parse_query_file(&text)?;
            let found = l.enumerate()?;
            let models = models_of(&found, &l.percent, l.mode == Mode::Staged)?;
            let sig = signature(l.exact.schema().len());
            let semantics = if cautious { Semantics::Cautious } else { Semantics::Brave };
            let mut out = String::new();
            for (i, q) in parsed.iter().enumerate() {
                let rows = answer(q, &models, &sig, semantics).with_context(|| format!("query {}", i + 1))?;
                if parsed.len() > 1 {
                    out.push_str(&format!("% query {}\n", i + 1));
                }
                out += &lines(format_answers(q, &rows));
            }
            out
        }
        Command::EmitDlv {
            run,
            weak,
            no_domain_rules,
            out,
        } => {
            let l = load(&run)?;
            let options = EmitterOptions {
                include_weak_constraints: weak,
                include_domain_rules: !no_domain_rules,
                maxint: run.maxint,
                ..Default::default()
            };
            let text = emit_cip(&l.percent, &l.entity, &l.constraints, &options)?;
            if let Some(path) = out {
                write_text(Some(&path), &text)?;
                String::new()
            } else {
                text
            }
        }
        Command::SolveAsp { program } => {
            let text = fs::read_to_string(&program).with_context(|| format!("cannot read {}", program.display()))?;
            let limit = limit_from_env().map_err(anyhow::Error::msg)?;
            let parsed = parse_program(&text)?;
            lines(stable_models(&parsed, limit)?.iter().map(format_model))
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli).and_then(|text| write_text(None, &text)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let chain: Vec<String> = e.chain().map(ToString::to_string).collect();
            eprintln!("error: {}", chain.join(": ").replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
