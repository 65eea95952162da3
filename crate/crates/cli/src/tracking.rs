//! Wrappers that remember, per thread, the last dependent client that
//! failed, so the service can answer 503 naming it.

use std::cell::RefCell;
use std::sync::Arc;

use capsight::agent::{ChatClient, ChatError, SearchClient, SearchError, WebResult};
use capsight::corpus::{EmbedError, Embedder};

thread_local! {
    static FAILED: RefCell<Option<(&'static str, String)>> = const { RefCell::new(None) };
}

fn note(client: &'static str, message: String) {
    FAILED.with(|f| *f.borrow_mut() = Some((client, message)));
}

/// Clears the failure slot of the current thread.
pub fn reset() {
    FAILED.with(|f| f.borrow_mut().take());
}

/// Takes the last failure recorded on the current thread.
pub fn take() -> Option<(&'static str, String)> {
    FAILED.with(|f| f.borrow_mut().take())
}

pub struct Tracked<T: ?Sized> {
    name: &'static str,
    inner: Arc<T>,
}

impl<T: ?Sized> Tracked<T> {
    pub fn new(name: &'static str, inner: Arc<T>) -> Self {
        Self { name, inner }
    }
}

impl ChatClient for Tracked<dyn ChatClient> {
    fn complete(&self, system: &str, user: &str) -> Result<String, ChatError> {
        self.inner.complete(system, user).inspect_err(|e| note(self.name, e.to_string()))
    }
}

impl SearchClient for Tracked<dyn SearchClient> {
    fn search(&self, query: &str) -> Result<Vec<WebResult>, SearchError> {
        self.inner.search(query).inspect_err(|e| note(self.name, e.to_string()))
    }
}

impl Embedder for Tracked<dyn Embedder> {
    fn dims(&self) -> usize {
        self.inner.dims()
    }

    fn id(&self) -> String {
        self.inner.id()
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>, EmbedError> {
        self.inner.embed(text).inspect_err(|e| {
            if matches!(e, EmbedError::EmbedderUnavailable(_)) {
                note(self.name, e.to_string())
            }
        })
    }
}
