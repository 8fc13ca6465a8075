//! Survival datasets, gene and pathway annotations, and their CSV formats.
//!
//! File layouts (all comma separated, one header row):
//!
//! | file         | header                                  |
//! |--------------|-----------------------------------------|
//! | genotypes    | `subject_id,<snp_id>...`                |
//! | phenotypes   | `subject_id,time,status`                |
//! | covariates   | `subject_id,<covar_id>...`              |
//! | gene map     | `snp_id,gene_id[,weight]`               |
//! | pathway map  | `gene_id,pathway_id[,weight]`           |
//!
//! Subjects are matched by ID and ordered as in the phenotype file.

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use ndarray::{Array2, ArrayView1, Axis};

use crate::{Error, Result};

/// Genotype dosages, covariates and right-censored outcomes for `n` subjects.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalDataset {
    subject_ids: Vec<String>,
    snp_ids: Vec<String>,
    covar_ids: Vec<String>,
    geno: Array2<f64>,
    covar: Array2<f64>,
    time: Vec<f64>,
    event: Vec<bool>,
}

impl SurvivalDataset {
    /// Builds a dataset, checking shapes, dosage range and time positivity.
    pub fn new(
        subject_ids: Vec<String>,
        snp_ids: Vec<String>,
        covar_ids: Vec<String>,
        geno: Array2<f64>,
        covar: Array2<f64>,
        time: Vec<f64>,
        event: Vec<bool>,
    ) -> Result<Self> {
        let n = subject_ids.len();
        if geno.nrows() != n || covar.nrows() != n || time.len() != n || event.len() != n {
            return Err(Error::Validation(format!(
                "row counts disagree: {} subjects, {} genotype rows, {} covariate rows, {} times, {} statuses",
                n,
                geno.nrows(),
                covar.nrows(),
                time.len(),
                event.len()
            )));
        }
        if geno.ncols() != snp_ids.len() {
            return Err(Error::Validation(format!(
                "{} genotype columns but {} SNP ids",
                geno.ncols(),
                snp_ids.len()
            )));
        }
        if covar.ncols() != covar_ids.len() {
            return Err(Error::Validation(format!(
                "{} covariate columns but {} covariate ids",
                covar.ncols(),
                covar_ids.len()
            )));
        }
        for ((i, j), &d) in geno.indexed_iter() {
            if !(0.0..=2.0).contains(&d) {
                return Err(Error::Validation(format!(
                    "dosage {d} outside [0,2] for subject {} at SNP {}",
                    subject_ids[i], snp_ids[j]
                )));
            }
        }
        for ((i, j), &c) in covar.indexed_iter() {
            if !c.is_finite() {
                return Err(Error::Validation(format!(
                    "non-finite covariate {} for subject {}",
                    covar_ids[j], subject_ids[i]
                )));
            }
        }
        for (id, &t) in subject_ids.iter().zip(&time) {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::Validation(format!(
                    "observed time {t} for subject {id} must be positive and finite"
                )));
            }
        }
        Ok(Self {
            subject_ids,
            snp_ids,
            covar_ids,
            geno,
            covar,
            time,
            event,
        })
    }

    pub fn n(&self) -> usize {
        self.subject_ids.len()
    }

    pub fn n_snps(&self) -> usize {
        self.snp_ids.len()
    }

    pub fn n_covars(&self) -> usize {
        self.covar_ids.len()
    }

    pub fn n_events(&self) -> usize {
        self.event.iter().filter(|&&e| e).count()
    }

    pub fn subject_ids(&self) -> &[String] {
        &self.subject_ids
    }

    pub fn snp_ids(&self) -> &[String] {
        &self.snp_ids
    }

    pub fn covar_ids(&self) -> &[String] {
        &self.covar_ids
    }

    /// `n x P` dosage matrix, one row per subject.
    pub fn geno(&self) -> &Array2<f64> {
        &self.geno
    }

    /// `n x K` covariate matrix.
    pub fn covar(&self) -> &Array2<f64> {
        &self.covar
    }

    pub fn time(&self) -> &[f64] {
        &self.time
    }

    pub fn event(&self) -> &[bool] {
        &self.event
    }

    pub fn geno_row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.geno.row(i)
    }

    pub fn snp_index(&self, id: &str) -> Option<usize> {
        self.snp_ids.iter().position(|s| s == id)
    }

    /// Keeps only the listed SNP columns, in the given order.
    pub fn select_snps(&self, cols: &[usize]) -> Self {
        let geno = self.geno.select(Axis(1), cols);
        let snp_ids = cols.iter().map(|&c| self.snp_ids[c].clone()).collect();
        Self {
            geno,
            snp_ids,
            ..self.clone()
        }
    }

    /// Replaces the genotype matrix, keeping outcomes and covariates.
    pub fn with_geno(&self, snp_ids: Vec<String>, geno: Array2<f64>) -> Result<Self> {
        Self::new(
            self.subject_ids.clone(),
            snp_ids,
            self.covar_ids.clone(),
            geno,
            self.covar.clone(),
            self.time.clone(),
            self.event.clone(),
        )
    }

    /// Rejects datasets on which no score can be formed.
    pub fn require_events(&self) -> Result<()> {
        if self.n_events() == 0 {
            Err(Error::NoEvents)
        } else {
            Ok(())
        }
    }

    /// Bytes held by the numeric payload (genotypes, covariates, outcomes).
    pub fn payload_bytes(&self) -> usize {
        let reals = self.geno.len() + self.covar.len() + self.time.len();
        reals * std::mem::size_of::<f64>() + self.event.len()
    }
}

/// SNP members of one gene with their weights `v_s`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gene {
    pub id: String,
    pub snps: Vec<usize>,
    pub weights: Vec<f64>,
}

impl Gene {
    pub fn unweighted(id: impl Into<String>, snps: Vec<usize>) -> Self {
        let weights = vec![1.0; snps.len()];
        Self {
            id: id.into(),
            snps,
            weights,
        }
    }

    pub fn len(&self) -> usize {
        self.snps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snps.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GeneMap {
    genes: IndexMap<String, Gene>,
    /// Non-fatal problems seen while loading (unknown SNPs, dropped genes).
    pub warnings: Vec<String>,
}

impl GeneMap {
    pub fn from_genes(genes: Vec<Gene>, n_snps: usize) -> Result<Self> {
        let mut map = IndexMap::new();
        for gene in genes {
            validate_gene(&gene, n_snps)?;
            if map.contains_key(&gene.id) {
                return Err(Error::Validation(format!("gene {} listed twice", gene.id)));
            }
            map.insert(gene.id.clone(), gene);
        }
        Ok(Self {
            genes: map,
            warnings: Vec::new(),
        })
    }

    pub fn get(&self, id: &str) -> Option<&Gene> {
        self.genes.get(id)
    }

    pub fn genes(&self) -> impl Iterator<Item = &Gene> {
        self.genes.values()
    }

    pub fn len(&self) -> usize {
        self.genes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.genes.is_empty()
    }
}

fn validate_gene(gene: &Gene, n_snps: usize) -> Result<()> {
    if gene.weights.len() != gene.snps.len() {
        return Err(Error::Validation(format!(
            "gene {}: {} SNPs but {} weights",
            gene.id,
            gene.snps.len(),
            gene.weights.len()
        )));
    }
    let mut seen = HashSet::new();
    for (&s, &w) in gene.snps.iter().zip(&gene.weights) {
        if s >= n_snps {
            return Err(Error::Validation(format!(
                "gene {} references SNP column {s} but only {n_snps} exist",
                gene.id
            )));
        }
        if !seen.insert(s) {
            return Err(Error::Validation(format!(
                "gene {} lists SNP column {s} twice",
                gene.id
            )));
        }
        if !(w >= 0.0 && w.is_finite()) {
            return Err(Error::Validation(format!(
                "gene {}: SNP weight {w} must be a non-negative number",
                gene.id
            )));
        }
    }
    Ok(())
}

/// A gene's membership in a pathway: gene weight `q_g` and SNP count `k_g`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathwayMember {
    pub gene: String,
    pub weight: f64,
    pub n_snps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pathway {
    pub id: String,
    pub members: Vec<PathwayMember>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PathwayMap {
    pathways: IndexMap<String, Pathway>,
    pub warnings: Vec<String>,
}

impl PathwayMap {
    /// Builds pathways from `(pathway, [(gene, weight)])` lists, resolving
    /// `k_g` against `genemap`.
    pub fn from_members(
        entries: Vec<(String, Vec<(String, f64)>)>,
        genemap: &GeneMap,
    ) -> Result<Self> {
        let mut pathways = IndexMap::new();
        for (id, genes) in entries {
            let mut members = Vec::with_capacity(genes.len());
            for (gene, weight) in genes {
                let g = genemap.get(&gene).ok_or_else(|| {
                    Error::Validation(format!("pathway {id}: gene {gene} not in gene map"))
                })?;
                if !(weight >= 0.0 && weight.is_finite()) {
                    return Err(Error::Validation(format!(
                        "pathway {id}: gene weight {weight} must be non-negative"
                    )));
                }
                members.push(PathwayMember {
                    gene,
                    weight,
                    n_snps: g.len(),
                });
            }
            pathways.insert(id.clone(), Pathway { id, members });
        }
        Ok(Self {
            pathways,
            warnings: Vec::new(),
        })
    }

    pub fn get(&self, id: &str) -> Option<&Pathway> {
        self.pathways.get(id)
    }

    pub fn pathways(&self) -> impl Iterator<Item = &Pathway> {
        self.pathways.values()
    }

    pub fn len(&self) -> usize {
        self.pathways.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pathways.is_empty()
    }
}

// ---------------------------------------------------------------------------
// Loading

fn open_csv(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(false)
        .from_path(path)
        .map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn schema(path: &Path, message: impl Into<String>) -> Error {
    Error::Schema {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn parse_real(path: &Path, line: usize, column: &str, raw: &str) -> Result<f64> {
    if raw.is_empty() {
        return Err(schema(path, format!("line {line}: missing value in column {column}")));
    }
    raw.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| schema(path, format!("line {line}: column {column}: cannot parse {raw:?} as a number")))
}

/// Rows of an ID-keyed numeric table.
struct IdTable {
    columns: Vec<String>,
    ids: Vec<String>,
    rows: Vec<Vec<f64>>,
}

fn read_id_table(path: &Path) -> Result<IdTable> {
    let mut reader = open_csv(path)?;
    let header = reader.headers().map_err(csv_err(path))?.clone();
    if header.get(0) != Some("subject_id") {
        return Err(schema(path, "first header column must be subject_id"));
    }
    let columns: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err(path))?;
        let line = r + 2;
        let id = record.get(0).unwrap_or_default().to_owned();
        if id.is_empty() {
            return Err(schema(path, format!("line {line}: empty subject_id")));
        }
        if !seen.insert(id.clone()) {
            return Err(schema(path, format!("line {line}: duplicate subject_id {id}")));
        }
        let values = columns
            .iter()
            .zip(record.iter().skip(1))
            .map(|(col, raw)| parse_real(path, line, col, raw))
            .collect::<Result<Vec<_>>>()?;
        ids.push(id);
        rows.push(values);
    }
    Ok(IdTable { columns, ids, rows })
}

fn check_ids(pheno_ids: &[String], other: &IdTable, what: &str, problems: &mut Vec<String>) {
    let pheno: HashSet<&str> = pheno_ids.iter().map(String::as_str).collect();
    let theirs: HashSet<&str> = other.ids.iter().map(String::as_str).collect();
    let mut missing: Vec<&str> = pheno_ids
        .iter()
        .map(String::as_str)
        .filter(|id| !theirs.contains(id))
        .collect();
    let mut extra: Vec<&str> = other
        .ids
        .iter()
        .map(String::as_str)
        .filter(|id| !pheno.contains(id))
        .collect();
    if !missing.is_empty() {
        missing.truncate(20);
        problems.push(format!("missing from {what}: {}", missing.join(", ")));
    }
    if !extra.is_empty() {
        extra.truncate(20);
        problems.push(format!("in {what} but not phenotypes: {}", extra.join(", ")));
    }
}

fn reorder(table: &IdTable, order: &[String]) -> Array2<f64> {
    let pos: HashMap<&str, usize> = table
        .ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let k = table.columns.len();
    let mut out = Array2::zeros((order.len(), k));
    for (i, id) in order.iter().enumerate() {
        let src = &table.rows[pos[id.as_str()]];
        for (j, &v) in src.iter().enumerate() {
            out[(i, j)] = v;
        }
    }
    out
}

/// Loads and aligns genotype, phenotype and (optional) covariate files.
pub fn load_dataset(
    geno_path: impl AsRef<Path>,
    pheno_path: impl AsRef<Path>,
    covar_path: Option<impl AsRef<Path>>,
) -> Result<SurvivalDataset> {
    let pheno_path = pheno_path.as_ref();
    let geno_path = geno_path.as_ref();

    let mut reader = open_csv(pheno_path)?;
    let header = reader.headers().map_err(csv_err(pheno_path))?.clone();
    if header.iter().collect::<Vec<_>>() != ["subject_id", "time", "status"] {
        return Err(schema(pheno_path, "header must be subject_id,time,status"));
    }
    let mut ids = Vec::new();
    let mut time = Vec::new();
    let mut event = Vec::new();
    let mut seen = HashSet::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err(pheno_path))?;
        let line = r + 2;
        let id = record[0].to_owned();
        if id.is_empty() {
            return Err(schema(pheno_path, format!("line {line}: empty subject_id")));
        }
        if !seen.insert(id.clone()) {
            return Err(schema(pheno_path, format!("line {line}: duplicate subject_id {id}")));
        }
        let t = parse_real(pheno_path, line, "time", &record[1])?;
        if t <= 0.0 {
            return Err(Error::Validation(format!(
                "{}: line {line}: subject {id} has non-positive time {t}",
                pheno_path.display()
            )));
        }
        let status = match &record[2] {
            "0" => false,
            "1" => true,
            other => {
                return Err(schema(
                    pheno_path,
                    format!("line {line}: status must be 0 or 1, got {other:?}"),
                ))
            }
        };
        ids.push(id);
        time.push(t);
        event.push(status);
    }

    let geno_table = read_id_table(geno_path)?;
    let covar_table = match covar_path {
        Some(p) => Some((p.as_ref().to_path_buf(), read_id_table(p.as_ref())?)),
        None => None,
    };

    let mut problems = Vec::new();
    check_ids(&ids, &geno_table, "genotypes", &mut problems);
    if let Some((_, table)) = &covar_table {
        check_ids(&ids, table, "covariates", &mut problems);
    }
    if !problems.is_empty() {
        return Err(Error::Alignment(problems.join("; ")));
    }

    // Range-check dosages here so the error names the file position.
    for (r, (id, row)) in geno_table.ids.iter().zip(&geno_table.rows).enumerate() {
        for (col, &d) in geno_table.columns.iter().zip(row) {
            if !(0.0..=2.0).contains(&d) {
                return Err(Error::Validation(format!(
                    "{}: line {}: dosage {d} for subject {id}, SNP {col} outside [0,2]",
                    geno_path.display(),
                    r + 2
                )));
            }
        }
    }

    let geno = reorder(&geno_table, &ids);
    let (covar_ids, covar) = match &covar_table {
        Some((_, table)) => (table.columns.clone(), reorder(table, &ids)),
        None => (Vec::new(), Array2::zeros((ids.len(), 0))),
    };
    SurvivalDataset::new(ids, geno_table.columns, covar_ids, geno, covar, time, event)
}

fn optional_weight(path: &Path, line: usize, raw: Option<&str>) -> Result<f64> {
    match raw {
        None | Some("") => Ok(1.0),
        Some(raw) => {
            let w = parse_real(path, line, "weight", raw)?;
            if w < 0.0 {
                Err(Error::Validation(format!(
                    "{}: line {line}: negative weight {w}",
                    path.display()
                )))
            } else {
                Ok(w)
            }
        }
    }
}

fn two_or_three_columns(path: &Path, reader: &mut csv::Reader<std::fs::File>, first: &str, second: &str) -> Result<()> {
    let header = reader.headers().map_err(csv_err(path))?;
    let cols: Vec<&str> = header.iter().collect();
    let ok = match cols.as_slice() {
        [a, b] => *a == first && *b == second,
        [a, b, c] => *a == first && *b == second && *c == "weight",
        _ => false,
    };
    if ok {
        Ok(())
    } else {
        Err(schema(path, format!("header must be {first},{second}[,weight]")))
    }
}

/// Reads a `snp_id,gene_id[,weight]` table. Unknown SNPs and genes left
/// without any resolvable SNP are reported in [`GeneMap::warnings`].
pub fn load_genemap(path: impl AsRef<Path>, dataset: &SurvivalDataset) -> Result<GeneMap> {
    let path = path.as_ref();
    let mut reader = open_csv(path)?;
    two_or_three_columns(path, &mut reader, "snp_id", "gene_id")?;

    let snp_pos: HashMap<&str, usize> = dataset
        .snp_ids()
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let mut genes: IndexMap<String, Gene> = IndexMap::new();
    let mut unknown: Vec<String> = Vec::new();

    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err(path))?;
        let line = r + 2;
        let snp = &record[0];
        let gene_id = &record[1];
        if gene_id.is_empty() {
            return Err(schema(path, format!("line {line}: empty gene_id")));
        }
        let weight = optional_weight(path, line, record.get(2))?;
        let gene = genes
            .entry(gene_id.to_owned())
            .or_insert_with(|| Gene::unweighted(gene_id, Vec::new()));
        match snp_pos.get(snp) {
            Some(&col) => {
                if gene.snps.contains(&col) {
                    return Err(Error::Validation(format!(
                        "{}: line {line}: SNP {snp} listed twice in gene {gene_id}",
                        path.display()
                    )));
                }
                gene.snps.push(col);
                gene.weights.push(weight);
            }
            None => unknown.push(snp.to_owned()),
        }
    }

    let mut warnings = Vec::new();
    if !unknown.is_empty() {
        warnings.push(format!(
            "{} SNP id(s) not present in genotypes: {}",
            unknown.len(),
            unknown.join(", ")
        ));
    }
    let mut kept = Vec::with_capacity(genes.len());
    for (id, gene) in genes {
        if gene.is_empty() {
            warnings.push(format!("gene {id} dropped: no SNPs found in genotypes"));
        } else {
            kept.push(gene);
        }
    }
    for w in &warnings {
        log::warn!("{}: {w}", path.display());
    }
    let mut map = GeneMap::from_genes(kept, dataset.n_snps())?;
    map.warnings = warnings;
    Ok(map)
}

/// Reads a `gene_id,pathway_id[,weight]` table against a loaded gene map.
pub fn load_pathwaymap(path: impl AsRef<Path>, genemap: &GeneMap) -> Result<PathwayMap> {
    let path = path.as_ref();
    let mut reader = open_csv(path)?;
    two_or_three_columns(path, &mut reader, "gene_id", "pathway_id")?;

    let mut entries: IndexMap<String, Vec<(String, f64)>> = IndexMap::new();
    let mut warnings = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err(path))?;
        let line = r + 2;
        let gene = &record[0];
        let pathway = &record[1];
        if pathway.is_empty() {
            return Err(schema(path, format!("line {line}: empty pathway_id")));
        }
        let weight = optional_weight(path, line, record.get(2))?;
        let members = entries.entry(pathway.to_owned()).or_default();
        if genemap.get(gene).is_none() {
            warnings.push(format!("pathway {pathway}: gene {gene} not in gene map, skipped"));
            continue;
        }
        if members.iter().any(|(g, _)| g == gene) {
            return Err(Error::Validation(format!(
                "{}: line {line}: gene {gene} listed twice in pathway {pathway}",
                path.display()
            )));
        }
        members.push((gene.to_owned(), weight));
    }

    let mut kept = Vec::new();
    for (id, members) in entries {
        if members.is_empty() {
            warnings.push(format!("pathway {id} dropped: no resolvable genes"));
        } else {
            kept.push((id, members));
        }
    }
    for w in &warnings {
        log::warn!("{}: {w}", path.display());
    }
    let mut map = PathwayMap::from_members(kept, genemap)?;
    map.warnings = warnings;
    Ok(map)
}

// ---------------------------------------------------------------------------
// Writing

fn create_csv(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|source| Error::Csv {
        path: path.to_path_buf(),
        source,
    })
}

fn flush(path: &Path, mut w: csv::Writer<std::fs::File>) -> Result<()> {
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_id_matrix(path: &Path, ids: &[String], columns: &[String], values: &Array2<f64>) -> Result<()> {
    let mut w = create_csv(path)?;
    let header = std::iter::once("subject_id").chain(columns.iter().map(String::as_str));
    w.write_record(header).map_err(csv_err(path))?;
    for (id, row) in ids.iter().zip(values.rows()) {
        let record = std::iter::once(id.clone()).chain(row.iter().map(|v| v.to_string()));
        w.write_record(record).map_err(csv_err(path))?;
    }
    flush(path, w)
}

/// Output locations for [`write_dataset`].
#[derive(Debug, Clone)]
pub struct DatasetPaths {
    pub geno: PathBuf,
    pub pheno: PathBuf,
    pub covar: PathBuf,
}

impl DatasetPaths {
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        Self {
            geno: dir.join("geno.csv"),
            pheno: dir.join("pheno.csv"),
            covar: dir.join("covar.csv"),
        }
    }
}

/// Writes the three dataset files. Reals use shortest round-trip formatting,
/// so reloading reproduces every value bit for bit.
pub fn write_dataset(dataset: &SurvivalDataset, paths: &DatasetPaths) -> Result<()> {
    write_id_matrix(&paths.geno, dataset.subject_ids(), dataset.snp_ids(), dataset.geno())?;
    write_id_matrix(&paths.covar, dataset.subject_ids(), dataset.covar_ids(), dataset.covar())?;

    let mut w = create_csv(&paths.pheno)?;
    w.write_record(["subject_id", "time", "status"])
        .map_err(csv_err(&paths.pheno))?;
    for ((id, t), &e) in dataset.subject_ids().iter().zip(dataset.time()).zip(dataset.event()) {
        w.write_record([id.clone(), t.to_string(), u8::from(e).to_string()])
            .map_err(csv_err(&paths.pheno))?;
    }
    flush(&paths.pheno, w)
}

pub fn write_genemap(path: impl AsRef<Path>, genemap: &GeneMap, dataset: &SurvivalDataset) -> Result<()> {
    let path = path.as_ref();
    let mut w = create_csv(path)?;
    w.write_record(["snp_id", "gene_id", "weight"]).map_err(csv_err(path))?;
    for gene in genemap.genes() {
        for (&s, &v) in gene.snps.iter().zip(&gene.weights) {
            w.write_record([dataset.snp_ids()[s].as_str(), gene.id.as_str(), &v.to_string()])
                .map_err(csv_err(path))?;
        }
    }
    flush(path, w)
}

pub fn write_pathwaymap(path: impl AsRef<Path>, pathways: &PathwayMap) -> Result<()> {
    let path = path.as_ref();
    let mut w = create_csv(path)?;
    w.write_record(["gene_id", "pathway_id", "weight"]).map_err(csv_err(path))?;
    for p in pathways.pathways() {
        for m in &p.members {
            w.write_record([m.gene.as_str(), p.id.as_str(), &m.weight.to_string()])
                .map_err(csv_err(path))?;
        }
    }
    flush(path, w)
}
