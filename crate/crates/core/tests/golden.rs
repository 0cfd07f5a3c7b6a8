mod common;

use synthkit::promptkit::TemplateKey;

#[test]
fn composed_prompts_match_golden_files() {
    if let Err(e) = common::check_goldens() {
        panic!("{e}");
    }
}

#[test]
fn golden_files_cover_exactly_the_template_keys() {
    let mut on_disk: Vec<TemplateKey> = std::fs::read_dir(common::crate_dir().join("tests/golden"))
        .unwrap()
        .map(|e| {
            let name = e.unwrap().file_name().into_string().unwrap();
            TemplateKey::parse_file_name(&name).unwrap_or_else(|| panic!("stray golden file {name}"))
        })
        .collect();
    on_disk.sort_by_key(|k| k.file_name());
    let mut want = TemplateKey::all();
    want.sort_by_key(|k| k.file_name());
    assert_eq!(on_disk, want);
}

#[test]
fn goldens_have_no_unresolved_slots() {
    for key in TemplateKey::all() {
        let body = std::fs::read_to_string(common::crate_dir().join("tests/golden").join(key.file_name())).unwrap();
        assert!(!synthkit::promptkit::has_unresolved_slot(&body), "{key}");
    }
}
