use crate::embedding::{load_embeddings, EmbeddingStore};

pub fn fixture_path(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

pub fn mini_store() -> EmbeddingStore {
    load_embeddings(fixture_path("mini.vec")).expect("fixture loads")
}
