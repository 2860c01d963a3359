use rand::seq::SliceRandom;

use super::FeatureTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchOrder {
    /// Seeded shuffle before batching (training).
    Shuffled(u64),
    /// Original order (evaluation).
    Sequential,
}

/// Sample indices grouped into consecutive batches; the last may be short.
pub fn batch_indices(n: usize, batch: usize, order: BatchOrder) -> Vec<Vec<usize>> {
    assert!(batch >= 1, "batch size must be positive");
    let mut idx: Vec<usize> = (0..n).collect();
    if let BatchOrder::Shuffled(seed) = order {
        idx.shuffle(&mut crate::rng::stream(seed, &[crate::rng::tag::SHUFFLE]));
    }
    idx.chunks(batch).map(<[usize]>::to_vec).collect()
}

pub struct Batches<'a> {
    samples: &'a [FeatureTensor],
    batches: std::vec::IntoIter<Vec<usize>>,
}

impl<'a> Iterator for Batches<'a> {
    type Item = Vec<&'a FeatureTensor>;

    fn next(&mut self) -> Option<Self::Item> {
        let idx = self.batches.next()?;
        Some(idx.into_iter().map(|i| &self.samples[i]).collect())
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        self.batches.size_hint()
    }
}

impl ExactSizeIterator for Batches<'_> {}

pub fn batch_iter(samples: &[FeatureTensor], batch: usize, order: BatchOrder) -> Batches<'_> {
    Batches {
        samples,
        batches: batch_indices(samples.len(), batch, order).into_iter(),
    }
}
