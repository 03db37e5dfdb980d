use alloc::string::ToString;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::code::{CodeSet, HashCode};
use crate::error::{Error, Result};

use super::{
    hamming_rank_topk_by, lookup_search, multi_index_search, radius_search, realvalued_topk_by,
    HashIndex, MultiIndex,
};

/// Retrieval method behind [`Recommender::recommend`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Linear scan for items within a Hamming radius.
    Linear,
    /// Hash-table probes over the Hamming ball.
    Lookup,
    /// Hamming ranking, top-k by popcount distance.
    Rank,
    /// Multi-index hashing within a Hamming radius.
    MultiIndex,
    /// Inner-product ranking over real-valued factors.
    Real,
}

impl Method {
    /// Every method, in CLI order.
    pub const ALL: [Method; 5] = [
        Method::Linear,
        Method::Lookup,
        Method::Rank,
        Method::MultiIndex,
        Method::Real,
    ];

    /// CLI name.
    pub fn name(self) -> &'static str {
        match self {
            Method::Linear => "linear",
            Method::Lookup => "lookup",
            Method::Rank => "rank",
            Method::MultiIndex => "multi-index",
            Method::Real => "real",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::UnknownMethod(s.to_string()))
    }
}

/// Per-query knobs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueryParams {
    /// Maximum number of results.
    pub top_k: usize,
    /// Hamming radius for the radius-based methods.
    pub radius: u32,
    /// Substring count for multi-index hashing.
    pub subcodes: usize,
}

impl Default for QueryParams {
    fn default() -> Self {
        QueryParams {
            top_k: 10,
            radius: 1,
            subcodes: 2,
        }
    }
}

/// A user-side query.
#[derive(Debug, Clone, Copy)]
pub enum Query<'a> {
    /// A user hash code.
    Code(&'a HashCode),
    /// A real-valued user factor.
    Vector(&'a [f64]),
}

/// One recommended item.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Recommendation {
    /// Item position in the code set.
    pub position: usize,
    /// Hamming distance for code methods, inner product for [`Method::Real`].
    pub score: f64,
}

/// Dispatch facade over the retrieval methods for one item universe.
#[derive(Debug, Clone)]
pub struct Recommender<'a> {
    items: &'a CodeSet,
    hash_index: Option<HashIndex>,
    multi_index: Option<MultiIndex>,
    vectors: Option<&'a [f64]>,
}

impl<'a> Recommender<'a> {
    /// Facade over `items` with no auxiliary index built yet.
    pub fn new(items: &'a CodeSet) -> Self {
        Recommender {
            items,
            hash_index: None,
            multi_index: None,
            vectors: None,
        }
    }

    /// Builds the full-code hash table.
    pub fn with_hash_index(mut self) -> Self {
        self.hash_index = Some(HashIndex::build(self.items));
        self
    }

    /// Builds a multi-index with `subcodes` substrings.
    pub fn with_multi_index(mut self, subcodes: usize) -> Result<Self> {
        self.multi_index = Some(MultiIndex::build(self.items, subcodes)?);
        Ok(self)
    }

    /// Attaches row-major real-valued item factors, aligned with the code set.
    pub fn with_item_vectors(mut self, vectors: &'a [f64]) -> Self {
        self.vectors = Some(vectors);
        self
    }

    /// Item universe.
    pub fn items(&self) -> &CodeSet {
        self.items
    }

    /// Ranked items for `query`, skipping every position in `seen`
    /// (ascending). Radius methods order by `(distance, position)`; all
    /// methods return at most `params.top_k` entries.
    pub fn recommend(
        &self,
        query: Query<'_>,
        method: Method,
        params: &QueryParams,
        seen: &[u32],
    ) -> Result<Vec<Recommendation>> {
        let unseen = |p: usize| seen.binary_search(&(p as u32)).is_err();
        let code = match (method, query) {
            (Method::Real, _) => None,
            (_, Query::Code(c)) => Some(c),
            (_, Query::Vector(_)) => return Err(Error::MissingIndex("user hash code")),
        };
        let within = |mut hits: Vec<(usize, u32)>| {
            hits.retain(|&(p, _)| unseen(p));
            hits.sort_by_key(|&(p, d)| (d, p));
            hits.truncate(params.top_k);
            to_recs(hits)
        };
        match method {
            Method::Linear => Ok(within(radius_search(
                code.unwrap(),
                self.items,
                params.radius,
            )?)),
            Method::Lookup => {
                let index = self
                    .hash_index
                    .as_ref()
                    .ok_or(Error::MissingIndex("hash index"))?;
                let q = code.unwrap();
                let hits = lookup_search(q, index, params.radius)?
                    .into_iter()
                    .map(|p| {
                        (
                            p,
                            crate::code::word_distance(q.words(), self.items.words(p)),
                        )
                    })
                    .collect();
                Ok(within(hits))
            }
            Method::Rank => Ok(to_recs(hamming_rank_topk_by(
                code.unwrap(),
                self.items,
                params.top_k,
                unseen,
            )?)),
            Method::MultiIndex => {
                let index = self
                    .multi_index
                    .as_ref()
                    .ok_or(Error::MissingIndex("multi-index"))?;
                if index.subcodes() != params.subcodes {
                    return Err(Error::InvalidSubcodes {
                        subcodes: params.subcodes,
                        bits: self.items.bits(),
                    });
                }
                Ok(within(multi_index_search(
                    code.unwrap(),
                    index,
                    self.items,
                    params.radius,
                )?))
            }
            Method::Real => {
                let vectors = self
                    .vectors
                    .ok_or(Error::MissingIndex("item factor matrix"))?;
                let Query::Vector(u) = query else {
                    return Err(Error::MissingIndex("real-valued user factor"));
                };
                Ok(realvalued_topk_by(u, vectors, params.top_k, unseen)?
                    .into_iter()
                    .map(|(position, score)| Recommendation { position, score })
                    .collect())
            }
        }
    }
}

fn to_recs(hits: Vec<(usize, u32)>) -> Vec<Recommendation> {
    hits.into_iter()
        .map(|(position, d)| Recommendation {
            position,
            score: d as f64,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retrieval::hamming_rank_topk;
    use alloc::vec;

    fn fixture() -> CodeSet {
        let codes: Vec<_> = [0b0000u64, 0b0001, 0b0111, 0b1111, 0b0010]
            .iter()
            .map(|&w| HashCode::from_words(4, vec![w]).unwrap())
            .collect();
        CodeSet::from_codes(4, &codes, None).unwrap()
    }

    #[test]
    fn method_names() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert_eq!(
            "hamming".parse::<Method>().unwrap_err(),
            Error::UnknownMethod("hamming".into())
        );
    }

    #[test]
    fn rank_delegates() {
        let items = fixture();
        let r = Recommender::new(&items);
        let q = HashCode::zeros(4);
        let params = QueryParams {
            top_k: 3,
            ..QueryParams::default()
        };
        let got = r
            .recommend(Query::Code(&q), Method::Rank, &params, &[])
            .unwrap();
        let want = hamming_rank_topk(&q, &items, 3).unwrap();
        assert_eq!(
            got.iter()
                .map(|x| (x.position, x.score as u32))
                .collect::<Vec<_>>(),
            want
        );
    }

    #[test]
    fn seen_items_never_returned() {
        let items = fixture();
        let vectors: Vec<f64> = (0..20).map(|i| i as f64 * 0.1).collect();
        let r = Recommender::new(&items)
            .with_hash_index()
            .with_multi_index(2)
            .unwrap()
            .with_item_vectors(&vectors);
        let q = HashCode::zeros(4);
        let u = [1.0, 1.0, 1.0, 1.0];
        let params = QueryParams {
            top_k: 10,
            radius: 4,
            subcodes: 2,
        };
        let seen = [0u32, 3];
        for m in Method::ALL {
            let query = if m == Method::Real {
                Query::Vector(&u)
            } else {
                Query::Code(&q)
            };
            let got = r.recommend(query, m, &params, &seen).unwrap();
            assert_eq!(got.len(), 3, "{m}");
            assert!(
                got.iter().all(|x| x.position != 0 && x.position != 3),
                "{m}"
            );
        }
    }

    #[test]
    fn radius_methods_agree() {
        let items = fixture();
        let r = Recommender::new(&items)
            .with_hash_index()
            .with_multi_index(2)
            .unwrap();
        let q = HashCode::from_words(4, vec![0b0011]).unwrap();
        let params = QueryParams {
            top_k: 10,
            radius: 1,
            subcodes: 2,
        };
        let linear = r
            .recommend(Query::Code(&q), Method::Linear, &params, &[])
            .unwrap();
        assert_eq!(linear.len(), 3);
        assert_eq!(
            r.recommend(Query::Code(&q), Method::Lookup, &params, &[])
                .unwrap(),
            linear
        );
        assert_eq!(
            r.recommend(Query::Code(&q), Method::MultiIndex, &params, &[])
                .unwrap(),
            linear
        );
    }

    #[test]
    fn missing_structures_are_reported() {
        let items = fixture();
        let r = Recommender::new(&items);
        let q = HashCode::zeros(4);
        let p = QueryParams::default();
        assert!(r
            .recommend(Query::Code(&q), Method::Lookup, &p, &[])
            .is_err());
        assert!(r
            .recommend(Query::Code(&q), Method::MultiIndex, &p, &[])
            .is_err());
        assert!(r
            .recommend(Query::Vector(&[0.0; 4]), Method::Real, &p, &[])
            .is_err());
        assert!(r
            .recommend(Query::Vector(&[0.0; 4]), Method::Rank, &p, &[])
            .is_err());
    }
}
