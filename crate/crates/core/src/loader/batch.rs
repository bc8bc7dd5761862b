//! Padded minibatches and token-budgeted packing.

use rand::seq::SliceRandom;
use rand::Rng;

use super::vocab::PAD_ID;

/// One numericalized example.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Encoded {
    pub src: Vec<u32>,
    pub tgt: Vec<u32>,
}

impl Encoded {
    /// Tokens charged against the batch budget.
    pub fn cost(&self) -> usize {
        self.src.len().max(self.tgt.len())
    }
}

/// Task-homogeneous batch with PAD-filled row-major id matrices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Minibatch {
    pub task_id: u16,
    pub step: u32,
    pub src_cols: usize,
    pub tgt_cols: usize,
    pub src: Vec<u32>,
    pub tgt: Vec<u32>,
    pub src_lens: Vec<u16>,
    pub tgt_lens: Vec<u16>,
}

impl Minibatch {
    /// Pads `examples` to the longest source and target.
    pub fn pad(task_id: u16, step: u32, examples: &[Encoded]) -> Self {
        let src_cols = examples.iter().map(|e| e.src.len()).max().unwrap_or(0);
        let tgt_cols = examples.iter().map(|e| e.tgt.len()).max().unwrap_or(0);
        let fill = |rows: &mut Vec<u32>, ids: &[u32], cols: usize| {
            rows.extend_from_slice(ids);
            rows.resize(rows.len() + cols - ids.len(), PAD_ID);
        };
        let mut src = Vec::with_capacity(examples.len() * src_cols);
        let mut tgt = Vec::with_capacity(examples.len() * tgt_cols);
        for e in examples {
            fill(&mut src, &e.src, src_cols);
            fill(&mut tgt, &e.tgt, tgt_cols);
        }
        Minibatch {
            task_id,
            step,
            src_cols,
            tgt_cols,
            src,
            tgt,
            src_lens: examples.iter().map(|e| e.src.len() as u16).collect(),
            tgt_lens: examples.iter().map(|e| e.tgt.len() as u16).collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.src_lens.len()
    }

    pub fn src_row(&self, r: usize) -> &[u32] {
        &self.src[r * self.src_cols..(r + 1) * self.src_cols]
    }

    pub fn tgt_row(&self, r: usize) -> &[u32] {
        &self.tgt[r * self.tgt_cols..(r + 1) * self.tgt_cols]
    }

    /// Budget charge: Σ max(src_len, tgt_len) over rows.
    pub fn token_cost(&self) -> usize {
        self.src_lens
            .iter()
            .zip(&self.tgt_lens)
            .map(|(&s, &t)| s.max(t) as usize)
            .sum()
    }

    /// Unpadded rows.
    pub fn examples(&self) -> Vec<Encoded> {
        (0..self.rows())
            .map(|r| Encoded {
                src: self.src_row(r)[..self.src_lens[r] as usize].to_vec(),
                tgt: self.tgt_row(r)[..self.tgt_lens[r] as usize].to_vec(),
            })
            .collect()
    }

    /// Checks shape, padding and the budget. Returns a description of the
    /// first violation.
    pub fn check(&self, token_budget: usize, max_len: usize) -> Result<(), String> {
        let rows = self.rows();
        if self.tgt_lens.len() != rows || self.src.len() != rows * self.src_cols || self.tgt.len() != rows * self.tgt_cols
        {
            return Err("matrix shape mismatch".into());
        }
        for r in 0..rows {
            for (row, len, side) in [
                (self.src_row(r), self.src_lens[r] as usize, "source"),
                (self.tgt_row(r), self.tgt_lens[r] as usize, "target"),
            ] {
                if len > row.len() || len > max_len {
                    return Err(format!("row {r}: {side} length {len} out of range"));
                }
                if row[len..].iter().any(|&id| id != PAD_ID) {
                    return Err(format!("row {r}: {side} padding is not PAD"));
                }
            }
        }
        let cost = self.token_cost();
        if cost > token_budget {
            return Err(format!("token cost {cost} exceeds budget {token_budget}"));
        }
        Ok(())
    }
}

/// Packs examples into batches.
///
/// Examples are taken in buffers of `bucket_size`. Each buffer is stably
/// sorted by [`Encoded::cost`], consecutive examples are packed greedily
/// while the summed cost stays within `token_budget`, and the buffer's
/// batches are emitted in shuffled order. An example costing more than the
/// budget on its own becomes a singleton batch.
pub fn assemble_batches<R: Rng + ?Sized>(
    examples: Vec<Encoded>,
    task_id: u16,
    step: u32,
    token_budget: usize,
    bucket_size: usize,
    rng: &mut R,
) -> Vec<Minibatch> {
    let bucket_size = bucket_size.max(1);
    let mut out = Vec::new();
    let mut examples = examples;
    while !examples.is_empty() {
        let rest = examples.split_off(bucket_size.min(examples.len()));
        let mut buffer = std::mem::replace(&mut examples, rest);
        buffer.sort_by_key(Encoded::cost);
        let mut batches = Vec::new();
        let mut start = 0;
        while start < buffer.len() {
            let mut end = start + 1;
            let mut cost = buffer[start].cost();
            while end < buffer.len() && end - start < u16::MAX as usize && cost + buffer[end].cost() <= token_budget {
                cost += buffer[end].cost();
                end += 1;
            }
            batches.push(Minibatch::pad(task_id, step, &buffer[start..end]));
            start = end;
        }
        batches.shuffle(rng);
        out.extend(batches);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ex(s: usize, t: usize) -> Encoded {
        Encoded {
            src: (10..10 + s as u32).collect(),
            tgt: (20..20 + t as u32).collect(),
        }
    }

    #[test]
    fn greedy_packing_arithmetic() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let batches = assemble_batches(vec![ex(4, 4), ex(4, 4), ex(4, 4)], 0, 0, 10, 16, &mut rng);
        let mut sizes: Vec<usize> = batches.iter().map(Minibatch::rows).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![1, 2]);
    }

    #[test]
    fn full_budget_example_is_singleton() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let batches = assemble_batches(vec![ex(10, 3), ex(1, 1)], 0, 0, 10, 16, &mut rng);
        assert_eq!(batches.len(), 2);
        assert!(batches.iter().any(|b| b.rows() == 1 && b.src_lens == [10]));
    }

    #[test]
    fn padding_and_invariants() {
        let b = Minibatch::pad(2, 5, &[ex(3, 1), ex(1, 2)]);
        assert_eq!((b.src_cols, b.tgt_cols), (3, 2));
        assert_eq!(b.src, vec![10, 11, 12, 10, 0, 0]);
        assert_eq!(b.tgt, vec![20, 0, 20, 21]);
        assert_eq!(b.token_cost(), 5);
        assert!(b.check(5, 3).is_ok());
        assert!(b.check(4, 3).is_err());
        assert_eq!(b.examples(), vec![ex(3, 1), ex(1, 2)]);
    }

    #[test]
    fn every_example_lands_in_one_budgeted_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let examples: Vec<Encoded> = (0..500).map(|_| ex(rng.gen_range(1..40), rng.gen_range(1..40))).collect();
        let batches = assemble_batches(examples.clone(), 1, 0, 100, 64, &mut rng);
        let mut seen: Vec<Encoded> = batches.iter().flat_map(Minibatch::examples).collect();
        for b in &batches {
            b.check(100, 40).unwrap();
        }
        let key = |e: &Encoded| (e.src.clone(), e.tgt.clone());
        seen.sort_by_key(key);
        let mut want = examples;
        want.sort_by_key(key);
        assert_eq!(seen, want);
    }

    #[test]
    fn buffers_sort_by_cost() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let batches = assemble_batches(vec![ex(1, 1), ex(9, 1), ex(2, 1), ex(8, 1)], 0, 0, 10, 4, &mut rng);
        let mut rows: Vec<Vec<u16>> = batches.iter().map(|b| b.src_lens.clone()).collect();
        rows.sort();
        assert_eq!(rows, vec![vec![1, 2], vec![8], vec![9]]);
    }
}
