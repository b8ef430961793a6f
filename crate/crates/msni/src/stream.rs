//! Replayable batch sources.
//!
//! Streaming estimators consume batches once, in order. Evaluation-side code
//! (the pooled oracle, sandwich variance plug-ins, coverage experiments)
//! additionally needs to *replay* a stream; a [`BatchSource`] provides that by
//! producing batch `k` on demand, either by regenerating it from its RNG
//! substream or by reading it back from memory.

use crate::loss::SampleBatch;

/// Random access to the batches of one stream. Indices are 1-based.
pub trait BatchSource: Sync {
    /// Total number of batches `K`.
    fn len(&self) -> usize;

    /// Feature dimension `p`.
    fn dim(&self) -> usize;

    /// Produce batch `k` (1-based). Implementations must return identical
    /// data on every call for the same `k`.
    fn batch(&self, k: usize) -> SampleBatch;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// In-order iteration over all batches.
    fn iter_batches(&self) -> BatchIter<'_, Self>
    where
        Self: Sized,
    {
        BatchIter { source: self, next: 1 }
    }
}

/// Iterator adapter over a [`BatchSource`].
pub struct BatchIter<'a, S: BatchSource> {
    source: &'a S,
    next: usize,
}

impl<S: BatchSource> Iterator for BatchIter<'_, S> {
    type Item = SampleBatch;

    fn next(&mut self) -> Option<SampleBatch> {
        if self.next > self.source.len() {
            return None;
        }
        let b = self.source.batch(self.next);
        self.next += 1;
        Some(b)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let rem = self.source.len() + 1 - self.next;
        (rem, Some(rem))
    }
}

/// A source backed by batches held in memory (file-loaded data, tests).
pub struct MemorySource {
    batches: Vec<SampleBatch>,
    dim: usize,
}

impl MemorySource {
    pub fn new(batches: Vec<SampleBatch>) -> Self {
        let dim = batches.first().map_or(0, |b| b.dim());
        Self { batches, dim }
    }

    pub fn batches(&self) -> &[SampleBatch] {
        &self.batches
    }
}

impl BatchSource for MemorySource {
    fn len(&self) -> usize {
        self.batches.len()
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn batch(&self, k: usize) -> SampleBatch {
        self.batches[k - 1].clone()
    }
}
