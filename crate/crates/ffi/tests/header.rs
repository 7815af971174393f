//! The generated C header is part of the crate's contract: it must exist
//! after a build and declare every exported symbol.

#[test]
fn the_generated_header_declares_the_full_api() {
    let header_path = concat!(env!("CARGO_MANIFEST_DIR"), "/include/cloudflow.h");
    let header = std::fs::read_to_string(header_path)
        .expect("include/cloudflow.h should be generated by build.rs");

    for symbol in [
        "cf_version",
        "cf_status_name",
        "cf_last_error_message",
        "cf_model_load",
        "cf_model_free",
        "cf_model_precision",
        "cf_model_embed_dim",
        "cf_model_sample",
        "cf_model_reconstruct",
        "cf_model_embed",
        "cf_model_embedding_nll",
        "cf_model_align",
        "cf_chamfer",
        "cf_emd",
        "CF_STATUS_OK",
        "CF_STATUS_PANIC",
        "CF_PRECISION_F64",
        "typedef struct CfModel CfModel;",
    ] {
        assert!(header.contains(symbol), "header is missing {symbol}");
    }

    // the handle stays opaque: no field list for CfModel anywhere
    assert!(!header.contains("struct CfModel {"), "CfModel must remain opaque");
}
