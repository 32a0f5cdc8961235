//! Person-dependent and person-independent evaluation protocols.
//!
//! Person-dependent: for each selected participant, 5-fold stratified
//! cross-validation on that participant's recordings alone; the participant's
//! accuracy is the mean over folds, and the report gives the mean and
//! standard deviation of those per-participant accuracies.
//!
//! Person-independent: each selected participant is withheld in turn and the
//! classifiers are trained on everyone else.
//!
//! Every classifier sees only the training split. Fusion combines the
//! rankings of all evaluated classifiers with Borda count.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datastore::{self, Dataset};
use crate::error::{Error, Result};
use crate::fusion::borda_fuse;
use crate::neuralnet::train::{fit_model, Preprocessing, TrainConfig};
use crate::neuralnet::{Checkpoint, ModelKind, RankedPrediction};
use crate::synthgen::derive_seed;
use crate::NUM_CLASSES;

pub const REPORT_FORMAT: &str = "airscript-report/1";
pub const DEFAULT_EVAL_EPOCHS: usize = 60;
pub const FOLDS: usize = 5;
pub const SELECTED_PARTICIPANTS: usize = 10;
pub const FUSION_NAME: &str = "fusion";

/// Something that can be trained on one split and rank the other.
pub trait Classifier: Send + Sync {
    fn name(&self) -> String;

    /// Trains on `train` and returns one ranking per recording of `test`.
    fn fit_predict(&self, train: &Dataset, test: &Dataset, seed: u64) -> Result<Vec<RankedPrediction>>;
}

/// One of the neural model kinds with its training configuration.
pub struct NeuralClassifier {
    pub kind: ModelKind,
    pub config: TrainConfig,
}

impl NeuralClassifier {
    pub fn new(kind: ModelKind, epochs: usize) -> Self {
        NeuralClassifier {
            kind,
            config: TrainConfig::for_kind(kind).with_epochs(epochs),
        }
    }
}

impl Classifier for NeuralClassifier {
    fn name(&self) -> String {
        self.kind.to_string()
    }

    /// Test recordings the preprocessing rejects get a uniform ranking.
    fn fit_predict(&self, train: &Dataset, test: &Dataset, seed: u64) -> Result<Vec<RankedPrediction>> {
        let kind = self.kind;
        let prep = Preprocessing::fit(kind, &self.config, &train.recordings)?;
        let mut feats = Vec::with_capacity(train.len());
        let mut labels = Vec::with_capacity(train.len());
        for rec in &train.recordings {
            match prep.features(kind, rec) {
                Ok(f) => {
                    feats.push(f);
                    labels.push(rec.label);
                }
                Err(Error::Domain(msg)) => log::warn!("{kind}: skipping training recording: {msg}"),
                Err(e) => return Err(e),
            }
        }
        let refs: Vec<&[f64]> = feats.iter().map(Vec::as_slice).collect();
        let fitted = fit_model(kind, &self.config, &refs, &labels, seed)?;
        let ckpt = Checkpoint {
            kind,
            seed,
            config: self.config.clone(),
            preprocessing: prep,
            train_fingerprint: String::new(),
            train_size: feats.len(),
            loss_history: fitted.loss_history,
            model: fitted.model,
        };

        let mut out = vec![RankedPrediction::uniform(NUM_CLASSES); test.len()];
        let mut usable = Vec::new();
        let mut test_feats = Vec::new();
        for (i, rec) in test.recordings.iter().enumerate() {
            match ckpt.preprocessing.features(kind, rec) {
                Ok(f) => {
                    usable.push(i);
                    test_feats.push(f);
                }
                Err(Error::Domain(msg)) => log::warn!("{kind}: test recording {i} unusable: {msg}"),
                Err(e) => return Err(e),
            }
        }
        let refs: Vec<&[f64]> = test_feats.iter().map(Vec::as_slice).collect();
        for (i, p) in usable.into_iter().zip(ckpt.predict_features(&refs)?) {
            out[i] = p;
        }
        Ok(out)
    }
}

/// Returns the true label first. For harness tests only.
pub struct PerfectClassifier;

impl Classifier for PerfectClassifier {
    fn name(&self) -> String {
        "perfect".into()
    }

    fn fit_predict(&self, _train: &Dataset, test: &Dataset, _seed: u64) -> Result<Vec<RankedPrediction>> {
        Ok(test
            .recordings
            .iter()
            .map(|r| {
                let mut s = vec![0.0; NUM_CLASSES];
                s[r.label as usize] = 1.0;
                RankedPrediction::from_scores(s)
            })
            .collect())
    }
}

/// Always ranks the same label first.
pub struct ConstantClassifier(pub usize);

impl Classifier for ConstantClassifier {
    fn name(&self) -> String {
        format!("constant-{}", self.0)
    }

    fn fit_predict(&self, _train: &Dataset, test: &Dataset, _seed: u64) -> Result<Vec<RankedPrediction>> {
        let mut s = vec![0.0; NUM_CLASSES];
        s[self.0] = 1.0;
        Ok(vec![RankedPrediction::from_scores(s); test.len()])
    }
}

/// Uniformly random rankings.
pub struct RandomClassifier;

impl Classifier for RandomClassifier {
    fn name(&self) -> String {
        "random".into()
    }

    fn fit_predict(&self, _train: &Dataset, test: &Dataset, seed: u64) -> Result<Vec<RankedPrediction>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok((0..test.len())
            .map(|_| RankedPrediction::from_scores((0..NUM_CLASSES).map(|_| rng.gen()).collect()))
            .collect())
    }
}

/// Rows are true labels, columns predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl Default for ConfusionMatrix {
    fn default() -> Self {
        ConfusionMatrix {
            counts: vec![vec![0; NUM_CLASSES]; NUM_CLASSES],
        }
    }
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.counts.len()).map(|i| self.counts[i][i]).sum()
    }

    /// Fraction correct, 0 for an empty matrix.
    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            n => self.trace() as f64 / n as f64,
        }
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

pub fn confusion(predicted: &[usize], truth: &[usize]) -> Result<ConfusionMatrix> {
    if predicted.len() != truth.len() {
        return Err(Error::contract(format!(
            "{} predictions for {} labels",
            predicted.len(),
            truth.len()
        )));
    }
    let mut m = ConfusionMatrix::default();
    for (&p, &t) in predicted.iter().zip(truth) {
        if p >= NUM_CLASSES || t >= NUM_CLASSES {
            return Err(Error::contract(format!("label pair ({t}, {p}) out of range")));
        }
        m.counts[t][p] += 1;
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Dependent,
    Independent,
}

impl std::str::FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dependent" => Ok(Protocol::Dependent),
            "independent" => Ok(Protocol::Independent),
            other => Err(Error::domain(format!(
                "unknown mode `{other}` (expected dependent or independent)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierReport {
    pub name: String,
    /// Accuracy (%) per participant, in the order of [`EvalReport::groups`].
    pub run_accuracies: Vec<f64>,
    pub mean_accuracy: f64,
    /// Population standard deviation of `run_accuracies`, in points.
    pub std_accuracy: f64,
    /// Accuracy (%) over all test predictions pooled, equal to
    /// `trace / total` of `confusion`.
    pub pooled_accuracy: f64,
    pub confusion: ConfusionMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub format: String,
    pub protocol: Protocol,
    pub seed: u64,
    /// SHA-256 over the dataset, the classifier list and the seed.
    pub fingerprint: String,
    /// Participants evaluated, in report order.
    pub groups: Vec<String>,
    pub classifiers: Vec<ClassifierReport>,
}

impl EvalReport {
    pub fn classifier(&self, name: &str) -> Option<&ClassifierReport> {
        self.classifiers.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: EvalReport = serde_json::from_str(text)?;
        if r.format != REPORT_FORMAT {
            return Err(Error::UnknownFormat(r.format));
        }
        Ok(r)
    }
}

/// Evaluation options shared by both protocols.
pub struct EvalOptions {
    pub seed: u64,
    /// Append a Borda fusion row over all classifiers.
    pub fusion: bool,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
}

struct Run {
    group: usize,
    train: Vec<usize>,
    test: Vec<usize>,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn select_participants(dataset: &Dataset, min: usize, seed: u64) -> Result<Vec<String>> {
    let mut all = dataset.participants();
    if all.len() < min {
        return Err(Error::domain(format!(
            "protocol needs at least {min} participants, dataset has {}",
            all.len()
        )));
    }
    // with 10 or 11 participants everyone is evaluated
    if all.len() > SELECTED_PARTICIPANTS + 1 {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x5e1, 0));
        all.shuffle(&mut rng);
        all.truncate(SELECTED_PARTICIPANTS);
        all.sort();
    }
    Ok(all)
}

fn dependent_runs(dataset: &Dataset, groups: &[String], seed: u64) -> Result<Vec<Run>> {
    let labels = dataset.labels();
    let mut runs = Vec::new();
    for (g, p) in groups.iter().enumerate() {
        let idx = dataset.indices_of_participant(p);
        let present: std::collections::BTreeSet<u8> = idx.iter().map(|&i| labels[i]).collect();
        if present.len() < NUM_CLASSES {
            return Err(Error::domain(format!(
                "participant {p} lacks recordings for some digits"
            )));
        }
        let splits = datastore::stratified_kfold_indices(&labels, &idx, FOLDS, derive_seed(seed, 0xf01d, g as u64))
            .map_err(|e| Error::domain(format!("participant {p}: {e}")))?;
        runs.extend(splits.into_iter().map(|s| Run {
            group: g,
            train: s.train,
            test: s.test,
        }));
    }
    Ok(runs)
}

fn independent_runs(dataset: &Dataset, groups: &[String]) -> Result<Vec<Run>> {
    groups
        .iter()
        .enumerate()
        .map(|(g, p)| {
            let s = datastore::leave_one_person_out(dataset, p)?;
            Ok(Run {
                group: g,
                train: s.train,
                test: s.test,
            })
        })
        .collect()
}

pub fn fingerprint(dataset: &Dataset, classifiers: &[&dyn Classifier], seed: u64) -> Result<String> {
    let mut h = Sha256::new();
    for rec in &dataset.recordings {
        h.update(datastore::recording_to_json(rec)?.as_bytes());
        h.update(b"\n");
    }
    for c in classifiers {
        h.update(c.name().as_bytes());
        h.update(b"\n");
    }
    h.update(seed.to_le_bytes());
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

pub fn person_dependent_eval(
    dataset: &Dataset,
    classifiers: &[&dyn Classifier],
    options: &EvalOptions,
) -> Result<EvalReport> {
    let groups = select_participants(dataset, SELECTED_PARTICIPANTS, options.seed)?;
    let runs = dependent_runs(dataset, &groups, options.seed)?;
    evaluate(dataset, Protocol::Dependent, groups, runs, classifiers, options)
}

pub fn person_independent_eval(
    dataset: &Dataset,
    classifiers: &[&dyn Classifier],
    options: &EvalOptions,
) -> Result<EvalReport> {
    let groups = select_participants(dataset, SELECTED_PARTICIPANTS + 1, options.seed)?;
    let runs = independent_runs(dataset, &groups)?;
    evaluate(dataset, Protocol::Independent, groups, runs, classifiers, options)
}

pub fn run_protocol(
    protocol: Protocol,
    dataset: &Dataset,
    classifiers: &[&dyn Classifier],
    options: &EvalOptions,
) -> Result<EvalReport> {
    match protocol {
        Protocol::Dependent => person_dependent_eval(dataset, classifiers, options),
        Protocol::Independent => person_independent_eval(dataset, classifiers, options),
    }
}

fn evaluate(
    dataset: &Dataset,
    protocol: Protocol,
    groups: Vec<String>,
    runs: Vec<Run>,
    classifiers: &[&dyn Classifier],
    options: &EvalOptions,
) -> Result<EvalReport> {
    let jobs: Vec<(usize, usize)> = (0..runs.len())
        .flat_map(|r| (0..classifiers.len()).map(move |c| (r, c)))
        .collect();
    let work = || -> Result<Vec<Vec<RankedPrediction>>> {
        jobs.par_iter()
            .map(|&(r, c)| {
                let run = &runs[r];
                let train = dataset.subset(&run.train);
                let test = dataset.subset(&run.test);
                let seed = derive_seed(options.seed, r as u64 + 1, c as u64 + 1);
                log::info!(
                    "{}: run {}/{} ({}), {} train / {} test",
                    classifiers[c].name(),
                    r + 1,
                    runs.len(),
                    groups[run.group],
                    train.len(),
                    test.len()
                );
                let preds = classifiers[c].fit_predict(&train, &test, seed)?;
                if preds.len() != test.len() {
                    return Err(Error::contract(format!(
                        "{} returned {} predictions for {} recordings",
                        classifiers[c].name(),
                        preds.len(),
                        test.len()
                    )));
                }
                Ok(preds)
            })
            .collect()
    };
    let outputs = match options.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::domain(format!("cannot start worker pool: {e}")))?
            .install(work)?,
        None => work()?,
    };

    let mut names: Vec<String> = classifiers.iter().map(|c| c.name()).collect();
    let fused = options.fusion && !classifiers.is_empty();
    if fused {
        names.push(FUSION_NAME.to_string());
    }
    let rows = names.len();
    // per classifier, per group: (correct, total) per run
    let mut fold_acc: Vec<Vec<Vec<f64>>> = vec![vec![Vec::new(); groups.len()]; rows];
    let mut matrices = vec![ConfusionMatrix::default(); rows];
    let labels = dataset.labels();
    for (r, run) in runs.iter().enumerate() {
        let truth: Vec<usize> = run.test.iter().map(|&i| labels[i] as usize).collect();
        let per_clf: Vec<&Vec<RankedPrediction>> = (0..classifiers.len())
            .map(|c| &outputs[r * classifiers.len() + c])
            .collect();
        let mut tops: Vec<Vec<usize>> = per_clf
            .iter()
            .map(|p| p.iter().map(RankedPrediction::top).collect())
            .collect();
        if fused {
            let f = (0..truth.len())
                .map(|i| {
                    let voters: Vec<RankedPrediction> = per_clf.iter().map(|p| p[i].clone()).collect();
                    borda_fuse(&voters).map(|p| p.top())
                })
                .collect::<Result<Vec<_>>>()?;
            tops.push(f);
        }
        for (c, pred) in tops.iter().enumerate() {
            let m = confusion(pred, &truth)?;
            fold_acc[c][run.group].push(100.0 * m.accuracy());
            matrices[c].merge(&m);
        }
    }

    let classifiers_out = names
        .into_iter()
        .enumerate()
        .map(|(c, name)| {
            let run_accuracies: Vec<f64> = fold_acc[c].iter().map(|f| mean_std(f).0).collect();
            let (mean_accuracy, std_accuracy) = mean_std(&run_accuracies);
            ClassifierReport {
                name,
                run_accuracies,
                mean_accuracy,
                std_accuracy,
                pooled_accuracy: 100.0 * matrices[c].accuracy(),
                confusion: matrices[c].clone(),
            }
        })
        .collect();

    Ok(EvalReport {
        format: REPORT_FORMAT.to_string(),
        protocol,
        seed: options.seed,
        fingerprint: fingerprint(dataset, classifiers, options.seed)?,
        groups,
        classifiers: classifiers_out,
    })
}

/// Text table with one row per classifier, accuracies to one decimal.
pub fn summarize(report: &EvalReport) -> String {
    let mut out = String::from("model | mean accuracy (%) | std deviation\n");
    for c in &report.classifiers {
        out.push_str(&format!(
            "{} | {:.1} | {:.1}\n",
            c.name, c.mean_accuracy, c.std_accuracy
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::{generate_dataset, NoiseProfile};

    fn small() -> Dataset {
        generate_dataset(12, 5, &NoiseProfile::standard(), 1).unwrap()
    }

    fn opts() -> EvalOptions {
        EvalOptions {
            seed: 3,
            fusion: false,
            threads: Some(1),
        }
    }

    #[test]
    fn confusion_counts() {
        let m = confusion(&[0, 1, 2], &[0, 1, 2]).unwrap();
        assert_eq!(m.trace(), 3);
        assert_eq!(m.total(), 3);
        let m = confusion(&[5], &[3]).unwrap();
        assert_eq!(m.counts[3][5], 1);
        assert_eq!(m.total(), 1);
        assert!(confusion(&[1], &[]).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p: Vec<usize> = (0..500).map(|_| rng.gen_range(0..10)).collect();
        let t: Vec<usize> = (0..500).map(|_| rng.gen_range(0..10)).collect();
        let m = confusion(&p, &t).unwrap();
        for a in 0..10 {
            for b in 0..10 {
                let n = p.iter().zip(&t).filter(|(x, y)| **x == b && **y == a).count();
                assert_eq!(m.counts[a][b], n as u64);
            }
        }
        let direct = p.iter().zip(&t).filter(|(x, y)| x == y).count() as f64 / 500.0;
        assert!((m.accuracy() - direct).abs() < 1e-12);
    }

    #[test]
    fn dummy_classifiers_dependent() {
        let ds = small();
        let r = person_dependent_eval(&ds, &[&PerfectClassifier, &ConstantClassifier(0)], &opts()).unwrap();
        assert_eq!(r.groups.len(), 10);
        let perfect = r.classifier("perfect").unwrap();
        assert_eq!(perfect.mean_accuracy, 100.0);
        assert_eq!(perfect.std_accuracy, 0.0);
        let constant = r.classifier("constant-0").unwrap();
        assert!((constant.mean_accuracy - 10.0).abs() < 1e-9);
        assert_eq!(perfect.confusion.total(), 500);
    }

    #[test]
    fn dummy_classifiers_independent() {
        let ds = small();
        let o = EvalOptions {
            fusion: true,
            ..opts()
        };
        let r = person_independent_eval(&ds, &[&PerfectClassifier, &RandomClassifier], &o).unwrap();
        assert_eq!(r.classifier("perfect").unwrap().mean_accuracy, 100.0);
        let random = r.classifier("random").unwrap();
        assert!((random.pooled_accuracy - 10.0).abs() < 5.0);
        assert_eq!(r.classifiers.last().unwrap().name, FUSION_NAME);
        let mut seen = r.groups.clone();
        seen.dedup();
        assert_eq!(seen.len(), 10);
    }

    #[test]
    fn protocol_preconditions() {
        let few = generate_dataset(10, 5, &NoiseProfile::clean(), 0).unwrap();
        assert!(person_independent_eval(&few, &[&PerfectClassifier], &opts()).is_err());
        assert_eq!(
            person_dependent_eval(&few, &[&PerfectClassifier], &opts()).unwrap().groups.len(),
            10
        );
        let thin = generate_dataset(12, 3, &NoiseProfile::clean(), 0).unwrap();
        let err = person_dependent_eval(&thin, &[&PerfectClassifier], &opts()).unwrap_err();
        assert!(err.to_string().contains("participant P"));
    }

    #[test]
    fn summary_and_json() {
        let mut r = person_dependent_eval(&small(), &[&PerfectClassifier], &opts()).unwrap();
        r.classifiers[0].name = "fusion".into();
        r.classifiers[0].mean_accuracy = 96.7;
        assert!(summarize(&r).contains("fusion | 96.7 | 0.0"));
        let back = EvalReport::from_json(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
        r.classifiers.clear();
        assert_eq!(summarize(&r).lines().count(), 1);
    }

    #[test]
    fn reports_do_not_depend_on_threads() {
        let ds = small();
        let mk = |t| EvalOptions {
            seed: 4,
            fusion: true,
            threads: Some(t),
        };
        let a = person_independent_eval(&ds, &[&RandomClassifier, &ConstantClassifier(2)], &mk(1)).unwrap();
        let b = person_independent_eval(&ds, &[&RandomClassifier, &ConstantClassifier(2)], &mk(4)).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    }
}
