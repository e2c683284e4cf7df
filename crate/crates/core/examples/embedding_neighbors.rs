//! Load a word-embedding text file and list nearest neighbours by cosine.
//!
//! ```text
//! cargo run --example embedding_neighbors -- vectors.txt food service
//! ```

use cmla::cli::inspect_embeddings;
use cmla::data::{load_embeddings, EmbeddingTable, OovPolicy};

fn main() -> cmla::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (table, words) = match args.split_first() {
        Some((path, words)) => (load_embeddings(path, OovPolicy::ZeroVector)?, words.to_vec()),
        None => {
            let text = "5 3\nfood 0.9 0.1 0\nmeal 0.8 0.2 0.1\npasta 0.7 0.1 0.3\nstaff 0 1 0.2\nwaiter 0.1 0.9 0.1\n";
            let table = EmbeddingTable::read_text(text.as_bytes(), "inline", OovPolicy::ZeroVector)?;
            (table, vec!["food".to_string(), "staff".to_string(), "terrace".to_string()])
        }
    };
    print!("{}", inspect_embeddings(&table, &words, 5));
    Ok(())
}
