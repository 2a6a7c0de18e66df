//! PAN-style directories: one `<author_id>.xml` feed per author plus a
//! `truth.txt` of `author_id:::label` lines.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{AuthorProfile, Corpus, Label, Post};
use crate::error::{Error, Result};

const TRUTH_SEPARATOR: &str = ":::";

fn xml_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_xml = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("xml"));
        if path.is_file() && is_xml {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn parse_author(path: &Path, language: &str) -> Result<AuthorProfile> {
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |message: String| Error::Parse {
        file: path.to_owned(),
        message,
    };
    let doc = roxmltree::Document::parse(&raw).map_err(|e| parse_err(e.to_string()))?;
    let root = doc.root_element();
    if !root.has_tag_name("author") {
        return Err(parse_err(format!(
            "root element is <{}>, expected <author>",
            root.tag_name().name()
        )));
    }
    let documents = root
        .children()
        .find(|n| n.has_tag_name("documents"))
        .ok_or_else(|| parse_err("missing <documents>".into()))?;
    let posts: Vec<Post> = documents
        .children()
        .filter(|n| n.has_tag_name("document"))
        .map(|n| {
            let text: String = n
                .descendants()
                .filter(|d| d.is_text())
                .filter_map(|d| d.text())
                .collect();
            Post::from_raw(text.trim())
        })
        .collect();
    if posts.is_empty() {
        return Err(parse_err("author has no <document> entries".into()));
    }
    let author_id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| parse_err("file name is not valid UTF-8".into()))?;
    AuthorProfile::new(author_id, language, posts, None)
}

/// Reads every `*.xml` author file in `dir`, in file-name order.
pub fn load_pan_directory(dir: &Path, language: &str) -> Result<Corpus> {
    let files = xml_files(dir)?;
    if files.is_empty() {
        return Err(Error::Consistency(format!(
            "no author files in {}",
            dir.display()
        )));
    }
    let profiles = files
        .iter()
        .map(|f| parse_author(f, language))
        .collect::<Result<Vec<_>>>()?;
    Corpus::new(profiles)
}

pub fn load_truth(path: &Path) -> Result<BTreeMap<String, Label>> {
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut truth = BTreeMap::new();
    for (lineno, line) in raw.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            file: path.to_owned(),
            message: format!("line {}: {message}", lineno + 1),
        };
        let (id, label) = line
            .split_once(TRUTH_SEPARATOR)
            .ok_or_else(|| parse_err(format!("expected id{TRUTH_SEPARATOR}label")))?;
        let label = match label.trim() {
            "0" => Label::Normal,
            "1" => Label::Spreader,
            other => return Err(parse_err(format!("label {other:?} is not 0 or 1"))),
        };
        if truth.insert(id.trim().to_owned(), label).is_some() {
            return Err(Error::Consistency(format!(
                "duplicate truth entry for {id} in {}",
                path.display()
            )));
        }
    }
    Ok(truth)
}

fn escape_xml(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Writes a corpus in PAN layout (raw texts, plus `truth.txt` when every
/// profile is labeled).
pub fn write_pan_directory(corpus: &Corpus, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut truth = String::new();
    let mut all_labeled = true;
    for p in corpus.profiles() {
        let mut xml = format!("<author lang=\"{}\">\n  <documents>\n", escape_xml(&p.language));
        for post in &p.posts {
            let _ = writeln!(xml, "    <document>{}</document>", escape_xml(&post.raw_text));
        }
        xml.push_str("  </documents>\n</author>\n");
        let path = dir.join(format!("{}.xml", p.author_id));
        fs::write(&path, xml).map_err(|e| Error::io(&path, e))?;
        match p.label {
            Some(l) => {
                let _ = writeln!(truth, "{}{TRUTH_SEPARATOR}{l}", p.author_id);
            }
            None => all_labeled = false,
        }
    }
    if all_labeled {
        let path = dir.join("truth.txt");
        fs::write(&path, truth).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
