//! Rating ingestion, activity filtering and per-user train/test splits.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;

use crate::error::{LaserError, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RatingFormat {
    /// `user::item::rating::timestamp`
    MovielensDat,
    /// Headered CSV with `user,item,rating[,timestamp]` columns.
    Csv,
    /// Dense dump written by [`InteractionMatrix::to_dump`].
    DenseTsv,
}

impl FromStr for RatingFormat {
    type Err = LaserError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "movielens_dat" | "dat" => Ok(RatingFormat::MovielensDat),
            "csv" => Ok(RatingFormat::Csv),
            "tsv" | "dense_tsv" => Ok(RatingFormat::DenseTsv),
            other => Err(LaserError::Config(format!("unknown rating format `{other}`"))),
        }
    }
}

/// One observed rating. `user_id` and `item_id` index into the id tables of
/// the owning [`RawRatings`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatingTriple {
    pub user_id: usize,
    pub item_id: usize,
    pub rating: f64,
    pub timestamp: Option<i64>,
}

/// Parsed ratings plus the external ids, in first-seen order.
#[derive(Debug, Clone, Default)]
pub struct RawRatings {
    pub triples: Vec<RatingTriple>,
    pub user_ids: Vec<String>,
    pub item_ids: Vec<String>,
}

impl RawRatings {
    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn external(&self, t: &RatingTriple) -> (&str, &str) {
        (&self.user_ids[t.user_id], &self.item_ids[t.item_id])
    }
}

#[derive(Default)]
struct Interner {
    ids: Vec<String>,
    index: HashMap<String, usize>,
}

impl Interner {
    fn intern(&mut self, key: &str) -> usize {
        if let Some(&i) = self.index.get(key) {
            return i;
        }
        let i = self.ids.len();
        self.ids.push(key.to_string());
        self.index.insert(key.to_string(), i);
        i
    }
}

fn parse_rating(field: &str, line: usize) -> Result<f64> {
    let r: f64 = field.trim().parse().map_err(|_| LaserError::Parse {
        line,
        message: format!("bad rating `{field}`"),
    })?;
    if !(r.is_finite() && r > 0.0) {
        return Err(LaserError::Parse {
            line,
            message: format!("rating must be positive, got {r}"),
        });
    }
    Ok(r)
}

fn parse_timestamp(field: &str, line: usize) -> Result<i64> {
    field.trim().parse().map_err(|_| LaserError::Parse {
        line,
        message: format!("bad timestamp `{field}`"),
    })
}

pub fn load_ratings(path: &Path, format: RatingFormat) -> Result<RawRatings> {
    let file = fs::File::open(path).map_err(|e| LaserError::io(path, e))?;
    parse_ratings(BufReader::new(file), format)
}

pub fn parse_ratings<R: BufRead>(reader: R, format: RatingFormat) -> Result<RawRatings> {
    let mut users = Interner::default();
    let mut items = Interner::default();
    let mut triples = Vec::new();

    let mut push = |u: &str, i: &str, rating: f64, timestamp: Option<i64>| {
        let user_id = users.intern(u.trim());
        let item_id = items.intern(i.trim());
        triples.push(RatingTriple {
            user_id,
            item_id,
            rating,
            timestamp,
        });
    };

    match format {
        RatingFormat::MovielensDat | RatingFormat::DenseTsv => {
            let (sep, min_fields) = match format {
                RatingFormat::MovielensDat => ("::", 4),
                _ => ("\t", 3),
            };
            for (idx, line) in reader.lines().enumerate() {
                let lineno = idx + 1;
                let line = line.map_err(|e| LaserError::Parse {
                    line: lineno,
                    message: e.to_string(),
                })?;
                if line.trim().is_empty() {
                    continue;
                }
                let fields: Vec<&str> = line.trim_end().split(sep).collect();
                if fields.len() < min_fields {
                    return Err(LaserError::Parse {
                        line: lineno,
                        message: format!("expected {min_fields} fields separated by `{sep}`"),
                    });
                }
                let rating = parse_rating(fields[2], lineno)?;
                let ts = match format {
                    RatingFormat::MovielensDat => Some(parse_timestamp(fields[3], lineno)?),
                    _ => None,
                };
                push(fields[0], fields[1], rating, ts);
            }
        }
        RatingFormat::Csv => {
            let mut rdr = csv::ReaderBuilder::new()
                .has_headers(true)
                .trim(csv::Trim::All)
                .from_reader(reader);
            let headers = rdr
                .headers()
                .map_err(|e| LaserError::Parse {
                    line: 1,
                    message: e.to_string(),
                })?
                .clone();
            let col = |name: &str| {
                headers
                    .iter()
                    .position(|h| h.eq_ignore_ascii_case(name))
            };
            let (Some(cu), Some(ci), Some(cr)) = (col("user"), col("item"), col("rating")) else {
                return Err(LaserError::Parse {
                    line: 1,
                    message: "CSV header must name user,item,rating columns".into(),
                });
            };
            let ct = col("timestamp");
            for (idx, rec) in rdr.records().enumerate() {
                let lineno = idx + 2;
                let rec = rec.map_err(|e| LaserError::Parse {
                    line: lineno,
                    message: e.to_string(),
                })?;
                let field = |c: usize| {
                    rec.get(c).ok_or_else(|| LaserError::Parse {
                        line: lineno,
                        message: format!("missing column {c}"),
                    })
                };
                let rating = parse_rating(field(cr)?, lineno)?;
                let ts = match ct {
                    Some(c) => Some(parse_timestamp(field(c)?, lineno)?),
                    None => None,
                };
                push(field(cu)?, field(ci)?, rating, ts);
            }
        }
    }

    if triples.is_empty() {
        return Err(LaserError::EmptyDataset("no ratings parsed".into()));
    }
    Ok(RawRatings {
        triples,
        user_ids: users.ids,
        item_ids: items.ids,
    })
}

/// Sparse user×item rating store. Rows are sorted by item id.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionMatrix {
    n_users: usize,
    n_items: usize,
    r_max: f64,
    rows: Vec<Vec<(u32, f64)>>,
    user_labels: Vec<String>,
    item_labels: Vec<String>,
}

impl InteractionMatrix {
    /// Build from dense `(user, item, rating)` entries. Duplicate keys keep
    /// the last occurrence.
    pub fn from_entries(
        n_users: usize,
        n_items: usize,
        r_max: f64,
        entries: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n_users];
        for (u, i, r) in entries {
            if u >= n_users {
                return Err(LaserError::OutOfRange {
                    what: "user",
                    index: u,
                    bound: n_users,
                });
            }
            if i >= n_items {
                return Err(LaserError::OutOfRange {
                    what: "item",
                    index: i,
                    bound: n_items,
                });
            }
            if !(r > 0.0 && r <= r_max) {
                return Err(LaserError::Precondition(format!(
                    "rating {r} outside (0, {r_max}]"
                )));
            }
            rows[u].push((i as u32, r));
        }
        for row in &mut rows {
            // stable sort keeps insertion order among duplicates; keep the last
            row.sort_by_key(|&(i, _)| i);
            let mut dedup: Vec<(u32, f64)> = Vec::with_capacity(row.len());
            for &(i, r) in row.iter() {
                match dedup.last_mut() {
                    Some(last) if last.0 == i => last.1 = r,
                    _ => dedup.push((i, r)),
                }
            }
            *row = dedup;
        }
        Ok(InteractionMatrix {
            n_users,
            n_items,
            r_max,
            rows,
            user_labels: (0..n_users).map(|u| u.to_string()).collect(),
            item_labels: (0..n_items).map(|i| i.to_string()).collect(),
        })
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn n_entries(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.iter().all(Vec::is_empty)
    }

    pub fn sparsity(&self) -> f64 {
        1.0 - self.n_entries() as f64 / (self.n_users as f64 * self.n_items as f64)
    }

    /// Items rated by `user` with their ratings, sorted by item id.
    pub fn user_row(&self, user: usize) -> &[(u32, f64)] {
        &self.rows[user]
    }

    pub fn degree(&self, user: usize) -> usize {
        self.rows[user].len()
    }

    pub fn rating(&self, user: usize, item: usize) -> Option<f64> {
        let row = &self.rows[user];
        row.binary_search_by_key(&(item as u32), |&(i, _)| i)
            .ok()
            .map(|k| row[k].1)
    }

    pub fn contains(&self, user: usize, item: usize) -> bool {
        self.rating(user, item).is_some()
    }

    /// All entries in (user, item) order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(u, row)| row.iter().map(move |&(i, r)| (u, i as usize, r)))
    }

    /// Users rating each item, ascending.
    pub fn item_users(&self) -> Vec<Vec<u32>> {
        let mut cols = vec![Vec::new(); self.n_items];
        for (u, row) in self.rows.iter().enumerate() {
            for &(i, _) in row {
                cols[i as usize].push(u as u32);
            }
        }
        cols
    }

    pub fn user_mean(&self, user: usize) -> Option<f64> {
        let row = &self.rows[user];
        if row.is_empty() {
            None
        } else {
            Some(row.iter().map(|&(_, r)| r).sum::<f64>() / row.len() as f64)
        }
    }

    pub fn user_labels(&self) -> &[String] {
        &self.user_labels
    }

    pub fn item_labels(&self) -> &[String] {
        &self.item_labels
    }

    pub fn set_labels(&mut self, users: Vec<String>, items: Vec<String>) -> Result<()> {
        if users.len() != self.n_users || items.len() != self.n_items {
            return Err(LaserError::Precondition("label tables do not match matrix shape".into()));
        }
        self.user_labels = users;
        self.item_labels = items;
        Ok(())
    }

    /// Same shape, keeping only rows of users for which `keep` is true.
    pub fn retain_users(&self, mut keep: impl FnMut(usize) -> bool) -> InteractionMatrix {
        let rows = self
            .rows
            .iter()
            .enumerate()
            .map(|(u, row)| if keep(u) { row.clone() } else { Vec::new() })
            .collect();
        InteractionMatrix {
            rows,
            ..self.clone_meta()
        }
    }

    /// Users with at least one rating.
    pub fn active_users(&self) -> Vec<usize> {
        (0..self.n_users).filter(|&u| !self.rows[u].is_empty()).collect()
    }

    fn clone_meta(&self) -> InteractionMatrix {
        InteractionMatrix {
            n_users: self.n_users,
            n_items: self.n_items,
            r_max: self.r_max,
            rows: Vec::new(),
            user_labels: self.user_labels.clone(),
            item_labels: self.item_labels.clone(),
        }
    }

    /// `user<TAB>item<TAB>rating` lines sorted by (user, item).
    pub fn to_dump(&self) -> String {
        let mut out = String::with_capacity(self.n_entries() * 12);
        for (u, i, r) in self.entries() {
            let _ = writeln!(out, "{u}\t{i}\t{r}");
        }
        out
    }

    /// Inverse of [`Self::to_dump`]; the shape and scale are not part of the
    /// dump and must be supplied.
    pub fn from_dump(text: &str, n_users: usize, n_items: usize, r_max: f64) -> Result<Self> {
        let raw = parse_ratings(text.as_bytes(), RatingFormat::DenseTsv);
        let raw = match raw {
            Ok(raw) => raw,
            Err(LaserError::EmptyDataset(_)) => RawRatings::default(),
            Err(e) => return Err(e),
        };
        let mut entries = Vec::with_capacity(raw.len());
        for t in &raw.triples {
            let (u, i) = raw.external(t);
            let parse = |s: &str| {
                s.parse::<usize>().map_err(|_| LaserError::Format(format!("non-dense id `{s}` in dump")))
            };
            entries.push((parse(u)?, parse(i)?, t.rating));
        }
        Self::from_entries(n_users, n_items, r_max, entries)
    }
}

/// Deduplicate, filter users/items below `min_interactions` to a fixed
/// point, and re-index densely in first-seen order.
pub fn build_matrix(raw: &RawRatings, min_interactions: usize) -> Result<InteractionMatrix> {
    if min_interactions == 0 {
        return Err(LaserError::Precondition("min_interactions must be >= 1".into()));
    }
    // Latest timestamp wins; among equal timestamps the later line wins.
    let mut latest: HashMap<(usize, usize), (Option<i64>, f64)> =
        HashMap::with_capacity(raw.triples.len());
    for t in &raw.triples {
        let key = (t.user_id, t.item_id);
        match latest.get(&key) {
            Some(&(prev_ts, _)) if prev_ts > t.timestamp => {}
            _ => {
                latest.insert(key, (t.timestamp, t.rating));
            }
        }
    }
    let mut entries: Vec<(usize, usize, f64)> =
        latest.into_iter().map(|((u, i), (_, r))| (u, i, r)).collect();
    entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

    let n_users_raw = raw.user_ids.len();
    let n_items_raw = raw.item_ids.len();
    let mut alive_users = vec![true; n_users_raw];
    let mut alive_items = vec![true; n_items_raw];
    loop {
        let mut user_deg = vec![0usize; n_users_raw];
        let mut item_deg = vec![0usize; n_items_raw];
        for &(u, i, _) in &entries {
            user_deg[u] += 1;
            item_deg[i] += 1;
        }
        let mut changed = false;
        for u in 0..n_users_raw {
            if alive_users[u] && user_deg[u] < min_interactions {
                alive_users[u] = false;
                changed = true;
            }
        }
        for i in 0..n_items_raw {
            if alive_items[i] && item_deg[i] < min_interactions {
                alive_items[i] = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        entries.retain(|&(u, i, _)| alive_users[u] && alive_items[i]);
    }
    if entries.is_empty() {
        return Err(LaserError::EmptyDataset(format!(
            "every rating was filtered out at min_interactions = {min_interactions}"
        )));
    }

    let remap = |alive: &[bool]| {
        let mut next = 0usize;
        alive
            .iter()
            .map(|&a| {
                if a {
                    next += 1;
                    Some(next - 1)
                } else {
                    None
                }
            })
            .collect::<Vec<_>>()
    };
    let user_map = remap(&alive_users);
    let item_map = remap(&alive_items);
    let n_users = user_map.iter().flatten().count();
    let n_items = item_map.iter().flatten().count();
    let r_max = entries.iter().map(|e| e.2).fold(f64::MIN, f64::max);
    let mut m = InteractionMatrix::from_entries(
        n_users,
        n_items,
        r_max,
        entries.iter().map(|&(u, i, r)| {
            (
                user_map[u].expect("alive user"),
                item_map[i].expect("alive item"),
                r,
            )
        }),
    )?;
    let labels = |ids: &[String], alive: &[bool]| {
        ids.iter()
            .zip(alive)
            .filter(|(_, &a)| a)
            .map(|(s, _)| s.clone())
            .collect::<Vec<_>>()
    };
    m.user_labels = labels(&raw.user_ids, &alive_users);
    m.item_labels = labels(&raw.item_ids, &alive_items);
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.9,
            seed: 0,
        }
    }
}

/// Number of training entries for a user with `n` ratings: floor, but at
/// least one train entry and, when `n >= 2`, at least one test entry.
pub fn train_count(n: usize, fraction: f64) -> usize {
    let k = ((n as f64) * fraction).floor() as usize;
    k.max(1).min(n.saturating_sub(1).max(1))
}

/// Per-user random split.
pub fn split(
    matrix: &InteractionMatrix,
    spec: SplitSpec,
) -> Result<(InteractionMatrix, InteractionMatrix)> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(LaserError::Config(format!(
            "train_fraction must lie in (0, 1), got {}",
            spec.train_fraction
        )));
    }
    let mut train_rows = Vec::with_capacity(matrix.n_users);
    let mut test_rows = Vec::with_capacity(matrix.n_users);
    for (u, row) in matrix.rows.iter().enumerate() {
        if row.len() == 1 {
            return Err(LaserError::Precondition(format!(
                "user {u} has a single rating and cannot be split"
            )));
        }
        let k = if row.is_empty() {
            0
        } else {
            train_count(row.len(), spec.train_fraction)
        };
        let mut order: Vec<usize> = (0..row.len()).collect();
        let mut rng = rng::rng_for(spec.seed, &[rng::TAG_SPLIT, u as u64]);
        order.shuffle(&mut rng);
        let mut train: Vec<(u32, f64)> = order[..k].iter().map(|&j| row[j]).collect();
        let mut test: Vec<(u32, f64)> = order[k..].iter().map(|&j| row[j]).collect();
        train.sort_by_key(|e| e.0);
        test.sort_by_key(|e| e.0);
        train_rows.push(train);
        test_rows.push(test);
    }
    Ok((
        InteractionMatrix {
            rows: train_rows,
            ..matrix.clone_meta()
        },
        InteractionMatrix {
            rows: test_rows,
            ..matrix.clone_meta()
        },
    ))
}
