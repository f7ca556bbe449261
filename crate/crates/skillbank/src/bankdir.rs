//! On-disk bank: `<dir>/<name>.md` per skill plus `<dir>/mutations.log`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use skillbank_core::bank::{BankError, GenerationTag, Mutation, SkillBank};
use skillbank_core::skill::{is_kebab_case, parse_skill, SectionSchema, Skill};

use crate::io::{atomic_write, parse_ndjson, to_ndjson, IoError};

pub const LOG_FILE: &str = "mutations.log";
const LOCK_FILE: &str = ".bank.lock";

#[derive(Debug, thiserror::Error)]
pub enum BankDirError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("bank directory {0} does not exist")]
    NoSuchDir(PathBuf),
    #[error("{file}: {message}")]
    BadFile { file: PathBuf, message: String },
    #[error("duplicate skill {name:?} in {first} and {second}")]
    DuplicateSkill {
        name: String,
        first: PathBuf,
        second: PathBuf,
    },
    #[error("{path}:{line}: bad mutation record: {message}")]
    BadLog {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("bank {0} is locked by another writer")]
    Locked(PathBuf),
    #[error(transparent)]
    Bank(#[from] BankError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LoadMode {
    /// Unparseable files are reported and skipped.
    #[default]
    Lenient,
    Strict,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileIssue {
    pub file: PathBuf,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedBank {
    pub bank: SkillBank,
    pub log: Vec<Mutation>,
    pub skipped: Vec<FileIssue>,
}

fn md_files(dir: &Path) -> Result<Vec<PathBuf>, BankDirError> {
    if !dir.is_dir() {
        return Err(BankDirError::NoSuchDir(dir.to_path_buf()));
    }
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| IoError::io(dir, e))? {
        let path = entry.map_err(|e| IoError::io(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|x| x == "md") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

pub fn read_log(dir: &Path) -> Result<Vec<Mutation>, BankDirError> {
    let path = dir.join(LOG_FILE);
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(&path).map_err(|e| IoError::io(&path, e))?;
    parse_ndjson(&text).map_err(|(line, message)| BankDirError::BadLog { path, line, message })
}

/// Load every `*.md` file. Names must be unique. Origins are restored from
/// the log; a bank with an empty log is tagged B0, otherwise B_star.
pub fn load_bank(dir: &Path, mode: LoadMode) -> Result<LoadedBank, BankDirError> {
    let mut skills: Vec<(PathBuf, Skill)> = Vec::new();
    let mut skipped = Vec::new();
    for file in md_files(dir)? {
        let text = fs::read_to_string(&file).map_err(|e| IoError::io(&file, e))?;
        match parse_skill(&text) {
            Ok(skill) => {
                if let Some((first, _)) = skills.iter().find(|(_, s)| s.name == skill.name) {
                    return Err(BankDirError::DuplicateSkill {
                        name: skill.name,
                        first: first.clone(),
                        second: file,
                    });
                }
                skills.push((file, skill));
            }
            Err(e) if mode == LoadMode::Lenient => skipped.push(FileIssue {
                file,
                message: e.to_string(),
            }),
            Err(e) => {
                return Err(BankDirError::BadFile {
                    file,
                    message: e.to_string(),
                })
            }
        }
    }
    let log = read_log(dir)?;
    let mut bank = SkillBank::from_skills(skills.into_iter().map(|(_, s)| s))?;
    for m in &log {
        if let Some(origin) = m.origin {
            bank.set_origin(&m.name, origin);
        }
    }
    let tag = if log.is_empty() {
        GenerationTag::B0
    } else {
        GenerationTag::BStar
    };
    Ok(LoadedBank {
        bank: bank.with_generation(tag),
        log,
        skipped,
    })
}

struct DirLock(PathBuf);

impl DirLock {
    fn acquire(dir: &Path) -> Result<Self, BankDirError> {
        let path = dir.join(LOCK_FILE);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(DirLock(path)),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(BankDirError::Locked(dir.to_path_buf())),
            Err(e) => Err(IoError::io(&path, e).into()),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

/// Write the bank as one canonical file per skill, drop stale `*.md`
/// files, and write `log` as the mutation log. Each file is replaced
/// atomically; a lock file keeps writers exclusive.
pub fn store_bank(dir: &Path, bank: &SkillBank, log: &[Mutation]) -> Result<(), BankDirError> {
    fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
    let _lock = DirLock::acquire(dir)?;
    for entry in bank.entries() {
        atomic_write(&dir.join(format!("{}.md", entry.skill.name)), entry.text.as_bytes())?;
    }
    for file in md_files(dir)? {
        let keep = file
            .file_stem()
            .and_then(|s| s.to_str())
            .is_some_and(|stem| bank.contains(stem));
        if !keep {
            fs::remove_file(&file).map_err(|e| IoError::io(&file, e))?;
        }
    }
    atomic_write(&dir.join(LOG_FILE), to_ndjson(log).as_bytes())?;
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub skills: usize,
    pub issues: Vec<FileIssue>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.issues.is_empty()
    }
}

/// Full check: every file parses, file names match skill names, names are
/// kebab-case, required sections are present, the log parses.
pub fn validate_bank(dir: &Path) -> Result<ValidationReport, BankDirError> {
    let mut report = ValidationReport::default();
    let schema = SectionSchema::bank();
    let mut names: Vec<String> = Vec::new();
    for file in md_files(dir)? {
        let text = fs::read_to_string(&file).map_err(|e| IoError::io(&file, e))?;
        let mut issue = |message: String| {
            report.issues.push(FileIssue {
                file: file.clone(),
                message,
            })
        };
        let skill = match parse_skill(&text) {
            Ok(s) => s,
            Err(e) => {
                issue(e.to_string());
                continue;
            }
        };
        if names.contains(&skill.name) {
            issue(format!("duplicate skill name {:?}", skill.name));
        }
        let stem = file.file_stem().and_then(|s| s.to_str()).unwrap_or("");
        if stem != skill.name {
            issue(format!("file name does not match skill name {:?}", skill.name));
        }
        if !is_kebab_case(&skill.name) {
            issue(format!("name {:?} is not kebab-case", skill.name));
        }
        let missing = schema.missing(&skill);
        if !missing.is_empty() {
            issue(format!("missing sections: {}", missing.join(", ")));
        }
        names.push(skill.name);
        report.skills += 1;
    }
    if let Err(e) = read_log(dir) {
        report.issues.push(FileIssue {
            file: dir.join(LOG_FILE),
            message: e.to_string(),
        });
    }
    Ok(report)
}
