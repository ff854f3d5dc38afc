//! Corpus ingestion, transcription normalisation, model persistence and
//! output emission.

pub mod emit;
pub mod manifest;
pub mod model_file;
pub mod png;
pub mod transcription;

pub use emit::{
    emit_outputs, file_stem, graph_svg, prototype_sheet, safe_name, write_json, OutputBundle,
    SheetRow,
};
pub use manifest::{
    count_characters, load_corpus, load_manifest, CorpusManifest, DocumentEntry, DocumentInfo,
    LineEntry, LoadOptions, LoadedCorpus,
};
pub use model_file::{decode_model, encode_model, load_model, save_model};
pub use png::{read_png, write_gray_png, write_png};
pub use transcription::{normalize_transcription, CharsetPolicy, UnknownPolicy};
