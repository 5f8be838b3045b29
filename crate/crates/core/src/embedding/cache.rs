use std::collections::HashMap;
use std::hash::{DefaultHasher, Hash, Hasher};
use std::sync::{Arc, Mutex};

use super::{Embedder, EmbedderSpec};
use crate::audio::AudioWindow;

/// Memoizes another embedder by window content.
///
/// Keys hash the sample bits, length and rate together with the backend id,
/// so equal audio reached through different pair sets is embedded once.
pub struct CachedEmbedder<'a> {
    inner: &'a dyn Embedder,
    entries: Mutex<HashMap<u64, Arc<[f32]>>>,
}

impl<'a> CachedEmbedder<'a> {
    pub fn new(inner: &'a dyn Embedder) -> Self {
        Self {
            inner,
            entries: Mutex::new(HashMap::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn key(&self, window: &AudioWindow) -> u64 {
        let mut h = DefaultHasher::new();
        self.inner.spec().backend_id.hash(&mut h);
        window.sample_rate().hash(&mut h);
        window.len().hash(&mut h);
        for chunk in window.samples().chunks(1024) {
            let bytes: Vec<u8> = chunk.iter().flat_map(|x| x.to_bits().to_le_bytes()).collect();
            h.write(&bytes);
        }
        h.finish()
    }
}

impl Embedder for CachedEmbedder<'_> {
    fn spec(&self) -> &EmbedderSpec {
        self.inner.spec()
    }

    fn embed_unchecked(&self, window: &AudioWindow) -> Vec<f32> {
        let key = self.key(window);
        if let Some(v) = self.entries.lock().expect("cache lock").get(&key) {
            return v.to_vec();
        }
        let v = self.inner.embed_unchecked(window);
        self.entries
            .lock()
            .expect("cache lock")
            .insert(key, v.clone().into());
        v
    }
}
