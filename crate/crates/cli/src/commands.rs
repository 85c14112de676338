use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use rerand::balance::{Assignment, BalanceContext, CovariateMatrix};
use rerand::criteria::{
    calibrate_threshold_asymptotic, calibrate_threshold_empirical, BalanceCriterion,
    CalibrationResult,
};
use rerand::harness::{run_by_id, EXPERIMENT_IDS};
use rerand::inference::{
    confidence_interval, confidence_interval_exact, randomization_test, randomization_test_exact,
};
use rerand::sampler::{
    count_assignments, default_max_proposals, enumerate_assignments, rerandomize, DesignResult,
    RngSpec,
};
use rerand::theory::{covariate_priv_grid, tau_priv_grid, TheoryInputs};

use crate::args::{
    CalibrateArgs, CalibrationMode, CiArgs, Command, CriterionArgs, DesignArgs, EnumerateArgs,
    GridKind, SimulateArgs, TestArgs, TheoryArgs,
};
use crate::ingest;
use crate::CliError;

/// Sub-stream offsets under the user's (seed, stream): one per purpose, so
/// the same root seed never replays one sequence across design, calibration,
/// and analysis.
const DESIGN_STREAM: u64 = 0;
const CALIBRATION_STREAM: u64 = 1;
const TEST_STREAM: u64 = 2;
const CI_STREAM: u64 = 3;

/// Designs with fewer acceptable assignments than this get a warning: the
/// randomization test cannot resolve p-values below 1/|acceptable set|.
const SMALL_ACCEPTABLE_SET: u64 = 1000;
/// Largest support the design command exhaustively checks for that warning.
const SUPPORT_CHECK_CEILING: u128 = 1_000_000;

pub fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Design(args) => design(&args),
        Command::Calibrate(args) => calibrate(&args),
        Command::Test(args) => test(&args),
        Command::Ci(args) => ci(&args),
        Command::Theory(args) => theory(&args),
        Command::Simulate(args) => simulate(&args),
        Command::Enumerate(args) => enumerate(&args),
    }
}

fn design(args: &DesignArgs) -> Result<(), CliError> {
    let data = ingest::read_covariates(&args.covariates, &args.transform)?;
    let n_treated = resolve_n_treated(args.n_treated, data.matrix.n_units())?;
    let ctx = BalanceContext::new(&data.matrix, n_treated)?;
    let base = args.seed.spec();
    let (criterion, calibration) = resolve_criterion(&args.criterion, &ctx, base)?;
    warn_when_acceptable_set_is_small(&ctx, &criterion)?;

    let budget = args
        .max_proposals
        .unwrap_or_else(|| default_max_proposals(args.criterion.p_a));
    let result = rerandomize(&ctx, &criterion, base.substream(DESIGN_STREAM), budget)?;

    if let Some(path) = &args.assignment_csv {
        write_assignment_csv(path, args, &data.unit_ids, &result.assignment)?;
    }
    emit(
        "design",
        args,
        json!({
            "unit_ids": data.unit_ids,
            "covariates": data.matrix,
            "criterion": criterion.to_json(),
            "calibration": calibration,
            "design": result,
        }),
        args.out.as_deref(),
    )
}

fn calibrate(args: &CalibrateArgs) -> Result<(), CliError> {
    let calibration = match &args.covariates {
        Some(path) => {
            let data = ingest::read_covariates(path, &args.transform)?;
            let n_treated = resolve_n_treated(args.n_treated, data.matrix.n_units())?;
            let ctx = BalanceContext::new(&data.matrix, n_treated)?;
            calibrate_threshold_empirical(
                &ctx,
                args.p_a,
                args.draws,
                args.seed.spec().substream(CALIBRATION_STREAM),
            )?
        }
        None => {
            let k = args.k.ok_or_else(|| {
                CliError::Usage(
                    "pass --k for asymptotic calibration or --covariates for empirical".into(),
                )
            })?;
            if args.transform.id_col.is_some()
                || args.transform.squares.is_some()
                || args.transform.interactions.is_some()
                || args.n_treated.is_some()
            {
                return Err(CliError::Usage(
                    "--id-col, --squares, --interactions, and --n-treated apply only with --covariates"
                        .into(),
                ));
            }
            calibrate_threshold_asymptotic(k, args.p_a)?
        }
    };
    emit(
        "calibrate",
        args,
        json!({ "calibration": calibration }),
        args.out.as_deref(),
    )
}

fn test(args: &TestArgs) -> Result<(), CliError> {
    let file = load_design(&args.design)?;
    let criterion = match &args.criterion {
        Some(spec) => parse_criterion_spec(spec)?,
        None => BalanceCriterion::from_json(&file.criterion)?,
    };
    let w_obs = &file.design.assignment;
    let ctx = BalanceContext::new(&file.covariates, w_obs.n_treated())?;
    let y = ingest::read_outcomes(
        &args.outcomes,
        args.id_col.as_deref(),
        args.outcome_col.as_deref(),
        &file.unit_ids,
    )?;

    let report = if args.exact {
        randomization_test_exact(&ctx, &criterion, &y, w_obs, args.tail.into(), args.ceiling)?
    } else {
        let budget = args.max_proposals.unwrap_or_else(|| default_max_proposals(None));
        randomization_test(
            &ctx,
            &criterion,
            &y,
            w_obs,
            args.tail.into(),
            args.n_sims,
            args.seed.spec().substream(TEST_STREAM),
            budget,
        )?
    };
    emit(
        "test",
        args,
        json!({ "unit_ids": file.unit_ids, "report": report }),
        args.out.as_deref(),
    )
}

fn ci(args: &CiArgs) -> Result<(), CliError> {
    let file = load_design(&args.design)?;
    let criterion = match &args.criterion {
        Some(spec) => parse_criterion_spec(spec)?,
        None => BalanceCriterion::from_json(&file.criterion)?,
    };
    let w_obs = &file.design.assignment;
    let ctx = BalanceContext::new(&file.covariates, w_obs.n_treated())?;
    let y = ingest::read_outcomes(
        &args.outcomes,
        args.id_col.as_deref(),
        args.outcome_col.as_deref(),
        &file.unit_ids,
    )?;

    let report = if args.exact {
        confidence_interval_exact(&ctx, &criterion, &y, w_obs, args.level, args.ceiling)?
    } else {
        let budget = args.max_proposals.unwrap_or_else(|| default_max_proposals(None));
        confidence_interval(
            &ctx,
            &criterion,
            &y,
            w_obs,
            args.level,
            args.n_sims,
            args.seed.spec().substream(CI_STREAM),
            budget,
        )?
    };
    emit(
        "ci",
        args,
        json!({ "unit_ids": file.unit_ids, "report": report }),
        args.out.as_deref(),
    )
}

const GRID_KS: [usize; 6] = [1, 2, 5, 10, 20, 50];
const GRID_P_AS: [f64; 7] = [0.001, 0.01, 0.05, 0.1, 0.2, 0.3, 0.5];
const GRID_R2S: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];

fn theory(args: &TheoryArgs) -> Result<(), CliError> {
    let Some(kind) = args.grid else {
        let k = args
            .k
            .ok_or_else(|| CliError::Usage("pass --k (or --grid for a surface)".into()))?;
        let inputs = TheoryInputs {
            k,
            threshold: args.threshold,
            p_a: args.p_a,
            r_squared: args.r2,
            n: args.n,
            m_observed: args.m,
        };
        let summary = inputs.resolve()?;
        return emit("theory", args, json!({ "summary": summary }), args.out.as_deref());
    };

    let ks = args.ks.clone().unwrap_or_else(|| GRID_KS.to_vec());
    let p_as = args.p_as.clone().unwrap_or_else(|| GRID_P_AS.to_vec());
    if ks.is_empty() || ks.contains(&0) {
        return Err(CliError::Usage("--ks entries must be ≥ 1".into()));
    }
    if p_as.is_empty() || p_as.iter().any(|&p| !(p > 0.0 && p <= 1.0)) {
        return Err(CliError::Usage("--p-as entries must lie in (0, 1]".into()));
    }

    let mut text = csv_provenance("theory", args);
    match kind {
        GridKind::CovariatePriv => {
            text.push_str("k,p_a,threshold,priv_covariate\n");
            for cell in covariate_priv_grid(&ks, &p_as) {
                text.push_str(&format!(
                    "{},{},{},{}\n",
                    cell.k, cell.p_a, cell.threshold, cell.priv_covariate
                ));
            }
        }
        GridKind::TauPriv => {
            let r2s = args.r2s.clone().unwrap_or_else(|| GRID_R2S.to_vec());
            if r2s.is_empty() || r2s.iter().any(|&r| !(0.0..=1.0).contains(&r)) {
                return Err(CliError::Usage("--r2s entries must lie in [0, 1]".into()));
            }
            text.push_str("p_a,k,r_squared,threshold,priv_tau\n");
            for cell in tau_priv_grid(&ks, &p_as, &r2s) {
                text.push_str(&format!(
                    "{},{},{},{},{}\n",
                    cell.p_a, cell.k, cell.r_squared, cell.threshold, cell.priv_tau
                ));
            }
        }
    }
    write_output(args.out.as_deref(), &text)
}

fn simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let ids: Vec<&str> = if args.id == "all" {
        EXPERIMENT_IDS.to_vec()
    } else if EXPERIMENT_IDS.contains(&args.id.as_str()) {
        vec![args.id.as_str()]
    } else {
        return Err(CliError::Usage(format!(
            "unknown experiment {:?}; expected one of {} or \"all\"",
            args.id,
            EXPERIMENT_IDS.join(", ")
        )));
    };
    let seed = args.seed.map(|s| RngSpec::with_stream(s, args.stream));

    let mut reports = Vec::with_capacity(ids.len());
    for (i, id) in ids.iter().enumerate() {
        let report = run_by_id(id, seed)?;
        if i > 0 {
            print_stdout("\n")?;
        }
        print_stdout(&format!("{report}\n"))?;
        if !report.passed {
            log::warn!("experiment {id} failed one or more checks");
        }
        reports.push(report);
    }
    if let Some(out) = &args.out {
        emit("simulate", args, json!({ "reports": reports }), Some(out))?;
    }
    Ok(())
}

fn enumerate(args: &EnumerateArgs) -> Result<(), CliError> {
    let data = ingest::read_covariates(&args.covariates, &args.transform)?;
    let n = data.matrix.n_units();
    let n_treated = resolve_n_treated(args.n_treated, n)?;
    let ctx = BalanceContext::new(&data.matrix, n_treated)?;
    let criterion = args
        .criterion
        .as_deref()
        .map(parse_criterion_spec)
        .transpose()?;

    if args.list {
        let mut text = csv_provenance("enumerate", args);
        text.push_str(if criterion.is_some() {
            "assignment,m,acceptable\n"
        } else {
            "assignment,m\n"
        });
        for w in enumerate_assignments(n, n_treated, args.ceiling)? {
            let m = ctx.mahalanobis(&w)?;
            let bits: String = w.indicators().iter().map(|b| char::from(b'0' + b)).collect();
            match &criterion {
                Some(c) => {
                    let flag = u8::from(c.evaluate(&ctx, &w)?);
                    text.push_str(&format!("{bits},{m},{flag}\n"));
                }
                None => text.push_str(&format!("{bits},{m}\n")),
            }
        }
        return write_output(args.out.as_deref(), &text);
    }

    let mut support: u64 = 0;
    let mut acceptable: u64 = 0;
    for w in enumerate_assignments(n, n_treated, args.ceiling)? {
        support += 1;
        if let Some(c) = &criterion {
            if c.evaluate(&ctx, &w)? {
                acceptable += 1;
            }
        }
    }
    let body = match &criterion {
        Some(c) => json!({
            "support": support,
            "criterion": c.to_json(),
            "acceptable": acceptable,
            "acceptance_fraction": acceptable as f64 / support as f64,
        }),
        None => json!({ "support": support }),
    };
    emit("enumerate", args, body, args.out.as_deref())
}

fn resolve_n_treated(requested: Option<usize>, n: usize) -> Result<usize, CliError> {
    match requested {
        Some(n_treated) => Ok(n_treated),
        None if n.is_multiple_of(2) => Ok(n / 2),
        None => Err(CliError::Usage(format!(
            "{n} units cannot split evenly; pass --n-treated"
        ))),
    }
}

fn resolve_criterion(
    args: &CriterionArgs,
    ctx: &BalanceContext,
    base: RngSpec,
) -> Result<(BalanceCriterion, Option<CalibrationResult>), CliError> {
    if let Some(spec) = &args.criterion {
        return Ok((parse_criterion_spec(spec)?, None));
    }
    let p_a = args
        .p_a
        .ok_or_else(|| CliError::Usage("pass either --criterion or --p-a".into()))?;
    let calibration = match args.calibration {
        CalibrationMode::Asymptotic => calibrate_threshold_asymptotic(ctx.rank(), p_a)?,
        CalibrationMode::Empirical => calibrate_threshold_empirical(
            ctx,
            p_a,
            args.calibration_draws,
            base.substream(CALIBRATION_STREAM),
        )?,
    };
    let criterion = BalanceCriterion::mahalanobis_threshold(calibration.threshold)?;
    Ok((criterion, Some(calibration)))
}

fn parse_criterion_spec(spec: &str) -> Result<BalanceCriterion, CliError> {
    let doc: Value = if spec.trim_start().starts_with('{') {
        serde_json::from_str(spec)
            .map_err(|e| CliError::Usage(format!("inline criterion is not valid JSON: {e}")))?
    } else {
        let path = Path::new(spec);
        let text = fs::read_to_string(path).map_err(|source| CliError::Io {
            action: "read",
            path: path.into(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| CliError::Json {
            path: path.into(),
            source,
        })?
    };
    Ok(BalanceCriterion::from_json(&doc)?)
}

fn warn_when_acceptable_set_is_small(
    ctx: &BalanceContext,
    criterion: &BalanceCriterion,
) -> Result<(), CliError> {
    let support = count_assignments(ctx.n_units(), ctx.n_treated())?;
    if support > SUPPORT_CHECK_CEILING {
        return Ok(());
    }
    let mut acceptable: u64 = 0;
    for w in enumerate_assignments(ctx.n_units(), ctx.n_treated(), SUPPORT_CHECK_CEILING as u64)? {
        if criterion.evaluate(ctx, &w)? {
            acceptable += 1;
        }
    }
    if acceptable == 0 {
        return Err(rerand::Error::EmptyAcceptableSet {
            criterion: criterion.describe(),
        }
        .into());
    }
    if acceptable < SMALL_ACCEPTABLE_SET {
        log::warn!(
            "only {acceptable} of {support} possible assignments satisfy the criterion; \
             randomization tests on this design cannot resolve p-values below 1/{acceptable}"
        );
    }
    Ok(())
}

/// The design file subset the analysis commands need; extra provenance
/// fields are ignored.
#[derive(serde::Deserialize)]
struct DesignFile {
    unit_ids: Vec<String>,
    covariates: CovariateMatrix,
    criterion: Value,
    design: DesignResult,
}

fn load_design(path: &Path) -> Result<DesignFile, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        action: "read",
        path: path.into(),
        source,
    })?;
    let file: DesignFile = serde_json::from_str(&text).map_err(|source| CliError::Json {
        path: path.into(),
        source,
    })?;
    if file.unit_ids.len() != file.covariates.n_units() {
        return Err(CliError::Usage(format!(
            "{} lists {} unit ids for {} covariate rows",
            path.display(),
            file.unit_ids.len(),
            file.covariates.n_units()
        )));
    }
    Ok(file)
}

/// Wrap a command's result in the provenance envelope and write it: tool
/// version, subcommand, and the full configuration, then the body's fields.
fn emit(
    command: &str,
    config: &impl Serialize,
    body: Value,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let mut doc = serde_json::Map::new();
    doc.insert(
        "tool".into(),
        json!({ "name": "rerand", "version": env!("CARGO_PKG_VERSION") }),
    );
    doc.insert("command".into(), Value::String(command.into()));
    doc.insert(
        "config".into(),
        serde_json::to_value(config).expect("config serializes to JSON"),
    );
    if let Value::Object(map) = body {
        for (key, value) in map {
            doc.insert(key, value);
        }
    }
    let text = serde_json::to_string_pretty(&Value::Object(doc)).expect("artifact serializes") + "\n";
    write_output(out, &text)
}

fn csv_provenance(command: &str, config: &impl Serialize) -> String {
    format!(
        "# tool: rerand {}\n# command: {command}\n# config: {}\n",
        env!("CARGO_PKG_VERSION"),
        serde_json::to_string(config).expect("config serializes to JSON")
    )
}

fn write_assignment_csv(
    path: &Path,
    config: &impl Serialize,
    unit_ids: &[String],
    assignment: &Assignment,
) -> Result<(), CliError> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record(["unit_id", "treated"])
        .and_then(|()| {
            unit_ids
                .iter()
                .zip(assignment.flags())
                .try_for_each(|(id, &treated)| {
                    writer.write_record([id.as_str(), if treated { "1" } else { "0" }])
                })
        })
        .map_err(|source| CliError::Csv { path: path.into(), source })?;
    let body = writer
        .into_inner()
        .expect("flushing an in-memory CSV buffer cannot fail");
    let text = csv_provenance("design", config)
        + &String::from_utf8(body).expect("CSV output is UTF-8");
    fs::write(path, text).map_err(|source| CliError::Io {
        action: "write",
        path: path.into(),
        source,
    })
}

fn write_output(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, text).map_err(|source| CliError::Io {
            action: "write",
            path: path.into(),
            source,
        }),
        None => print_stdout(text),
    }
}

/// A closed downstream pipe (e.g. `rerand ... | head`) ends the program
/// quietly instead of panicking mid-write.
fn print_stdout(text: &str) -> Result<(), CliError> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => std::process::exit(0),
        Err(source) => Err(CliError::Io {
            action: "write",
            path: "stdout".into(),
            source,
        }),
    }
}
