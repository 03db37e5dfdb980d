use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use dch_core::{Dataset, RatingScale};

use super::{open, IoError};

/// On-disk layout of a ratings file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RatingsFormat {
    /// `user<TAB>item<TAB>rating` per line.
    Tsv,
    /// `<movie-id>:` headers followed by `user,rating,date` lines. The path
    /// may be a single file or a directory of such files.
    NetflixPrize,
}

/// A ratings source.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RatingsFile {
    /// Layout.
    pub format: RatingsFormat,
    /// File or directory.
    pub path: PathBuf,
}

/// A loaded dataset with its external ids, indexed by dense position.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedRatings {
    /// Ratings over dense indices.
    pub data: Dataset,
    /// External user ids.
    pub user_ids: Vec<String>,
    /// External item ids.
    pub item_ids: Vec<String>,
}

#[derive(Debug, Clone, Default)]
struct IdMap {
    index: HashMap<String, u32>,
    ids: Vec<String>,
}

impl IdMap {
    fn get_or_insert(&mut self, id: &str) -> u32 {
        if let Some(&i) = self.index.get(id) {
            return i;
        }
        let i = self.ids.len() as u32;
        self.index.insert(id.to_string(), i);
        self.ids.push(id.to_string());
        i
    }
}

/// Accumulates ratings, assigning dense indices in first-appearance order.
#[derive(Debug, Clone)]
pub struct RatingsBuilder {
    scale: RatingScale,
    users: IdMap,
    items: IdMap,
    raw: Vec<(u32, u32, f64)>,
}

impl RatingsBuilder {
    /// Empty builder for ratings on `scale`.
    pub fn new(scale: RatingScale) -> Self {
        RatingsBuilder {
            scale,
            users: IdMap::default(),
            items: IdMap::default(),
            raw: Vec::new(),
        }
    }

    /// Adds one rating read from `line`.
    pub fn push(
        &mut self,
        user: &str,
        item: &str,
        rating: f64,
        line: usize,
    ) -> Result<(), IoError> {
        if self.scale.normalize(rating).is_err() {
            return Err(IoError::OutOfScale {
                line,
                value: rating,
            });
        }
        let u = self.users.get_or_insert(user);
        let i = self.items.get_or_insert(item);
        self.raw.push((u, i, rating));
        Ok(())
    }

    /// Finishes the dataset.
    pub fn finish(self) -> Result<LoadedRatings, IoError> {
        if self.raw.is_empty() {
            return Err(IoError::EmptyDataset);
        }
        let data = Dataset::from_raw(
            self.users.ids.len(),
            self.items.ids.len(),
            &self.raw,
            self.scale,
        )?;
        Ok(LoadedRatings {
            data,
            user_ids: self.users.ids,
            item_ids: self.items.ids,
        })
    }
}

fn parse_rating(field: &str, line: usize) -> Result<f64, IoError> {
    let value: f64 = field.trim().parse().map_err(|_| IoError::Malformed {
        line,
        reason: format!("rating {field:?} is not a number"),
    })?;
    if value.is_finite() {
        Ok(value)
    } else {
        Err(IoError::Malformed {
            line,
            reason: format!("rating {field:?} is not finite"),
        })
    }
}

/// Reads tab-separated triples. Blank lines are skipped.
pub fn parse_tsv<R: BufRead>(reader: R, builder: &mut RatingsBuilder) -> Result<(), IoError> {
    for (n, line) in reader.lines().enumerate() {
        let line_no = n + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(IoError::Malformed {
                line: line_no,
                reason: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        if fields[0].is_empty() || fields[1].is_empty() {
            return Err(IoError::Malformed {
                line: line_no,
                reason: "empty user or item id".into(),
            });
        }
        let rating = parse_rating(fields[2], line_no)?;
        builder.push(fields[0], fields[1], rating, line_no)?;
    }
    Ok(())
}

/// Reads one Netflix-prize file: `<movie-id>:` headers, then
/// `user,rating,date` lines for that movie.
pub fn parse_netflix<R: BufRead>(reader: R, builder: &mut RatingsBuilder) -> Result<(), IoError> {
    let mut movie: Option<String> = None;
    for (n, line) in reader.lines().enumerate() {
        let line_no = n + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(id) = line.strip_suffix(':') {
            if id.is_empty() || id.contains(',') {
                return Err(IoError::Malformed {
                    line: line_no,
                    reason: format!("bad movie header {line:?}"),
                });
            }
            movie = Some(id.to_string());
            continue;
        }
        let Some(item) = movie.as_deref() else {
            return Err(IoError::Malformed {
                line: line_no,
                reason: "rating line before any movie header".into(),
            });
        };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 || fields[0].is_empty() {
            return Err(IoError::Malformed {
                line: line_no,
                reason: "expected user,rating,date".into(),
            });
        }
        let rating = parse_rating(fields[1], line_no)?;
        builder.push(fields[0], item, rating, line_no)?;
    }
    Ok(())
}

fn netflix_files(path: &Path) -> Result<Vec<PathBuf>, IoError> {
    if !path.is_dir() {
        return Ok(vec![path.to_path_buf()]);
    }
    let entries = std::fs::read_dir(path).map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })?;
    let mut files = Vec::new();
    for e in entries {
        let p = e?.path();
        if p.is_file() {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

/// Loads a ratings file. Ids become dense indices in first-appearance order.
pub fn load_ratings(file: &RatingsFile, scale: RatingScale) -> Result<LoadedRatings, IoError> {
    let mut builder = RatingsBuilder::new(scale);
    match file.format {
        RatingsFormat::Tsv => parse_tsv(BufReader::new(open(&file.path)?), &mut builder)?,
        RatingsFormat::NetflixPrize => {
            for p in netflix_files(&file.path)? {
                parse_netflix(BufReader::new(open(&p)?), &mut builder).map_err(|e| match e {
                    IoError::Malformed { line, reason } => IoError::Malformed {
                        line,
                        reason: format!("{}: {reason}", p.display()),
                    },
                    other => other,
                })?;
            }
        }
    }
    builder.finish()
}

/// Writes `data` as TSV using the given external ids.
pub fn write_tsv<W: Write>(
    data: &Dataset,
    user_ids: &[String],
    item_ids: &[String],
    mut out: W,
) -> Result<(), IoError> {
    for (t, raw) in data.triples().iter().zip(data.raw_ratings()) {
        writeln!(
            out,
            "{}\t{}\t{}",
            user_ids[t.user as usize], item_ids[t.item as usize], raw
        )?;
    }
    out.flush()?;
    Ok(())
}
