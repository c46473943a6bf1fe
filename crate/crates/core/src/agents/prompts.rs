//! Versioned prompt templates with `{{name}}` placeholders.
//!
//! A template file holds a `[system]` section and a `[user]` section. Files are
//! named `<role>.v<version>.txt`; when loading a directory the highest version
//! of each role wins and roles without a file keep the shipped template.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pub role: String,
    pub version: u32,
    system: String,
    user: String,
}

impl Template {
    pub fn parse(role: &str, version: u32, text: &str) -> Result<Self, String> {
        let text = text.replace("\r\n", "\n");
        let sys_at = text
            .find("[system]\n")
            .ok_or_else(|| format!("{role}: missing [system] section"))?;
        let user_at = text
            .find("\n[user]\n")
            .ok_or_else(|| format!("{role}: missing [user] section"))?;
        if user_at < sys_at {
            return Err(format!("{role}: [user] must follow [system]"));
        }
        let system = text[sys_at + "[system]\n".len()..user_at].trim().to_string();
        let user = text[user_at + "\n[user]\n".len()..].to_string();
        Ok(Self {
            role: role.to_string(),
            version,
            system,
            user,
        })
    }

    pub fn placeholders(&self) -> Vec<String> {
        let mut out = Vec::new();
        for part in [&self.system, &self.user] {
            let mut rest = part.as_str();
            while let Some(i) = rest.find("{{") {
                let Some(j) = rest[i..].find("}}") else { break };
                out.push(rest[i + 2..i + j].to_string());
                rest = &rest[i + j + 2..];
            }
        }
        out.sort();
        out.dedup();
        out
    }

    /// Fill every placeholder in one pass, so substituted values are never
    /// themselves expanded.
    pub fn render(&self, vars: &[(&str, &str)]) -> Result<(String, String), String> {
        let vars: HashMap<&str, &str> = vars.iter().copied().collect();
        Ok((fill(&self.system, &vars, &self.role)?, fill(&self.user, &vars, &self.role)?))
    }
}

fn fill(text: &str, vars: &HashMap<&str, &str>, role: &str) -> Result<String, String> {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(i) = rest.find("{{") {
        let Some(j) = rest[i..].find("}}") else { break };
        let name = &rest[i + 2..i + j];
        let value = vars
            .get(name)
            .ok_or_else(|| format!("{role}: no value for placeholder {{{{{name}}}}}"))?;
        out.push_str(&rest[..i]);
        out.push_str(value);
        rest = &rest[i + j + 2..];
    }
    out.push_str(rest);
    Ok(out)
}

macro_rules! shipped {
    ($role:literal) => {
        ($role, include_str!(concat!("../../templates/", $role, ".v1.txt")))
    };
}

const SHIPPED: [(&str, &str); 7] = [
    shipped!("questions"),
    shipped!("answer"),
    shipped!("verdict"),
    shipped!("sufficiency"),
    shipped!("zero_shot"),
    shipped!("few_shot"),
    shipped!("web_search"),
];

#[derive(Debug, Clone)]
pub struct PromptSet {
    pub questions: Template,
    pub answer: Template,
    pub verdict: Template,
    pub sufficiency: Template,
    pub zero_shot: Template,
    pub few_shot: Template,
    pub web_search: Template,
}

impl PromptSet {
    pub fn shipped() -> Self {
        let mut by_role: HashMap<&str, Template> = SHIPPED
            .iter()
            .map(|(role, text)| {
                (*role, Template::parse(role, 1, text).expect("shipped template parses"))
            })
            .collect();
        Self::from_map(&mut by_role)
    }

    /// Override shipped templates with `<role>.v<N>.txt` files from `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, String> {
        let mut by_role: HashMap<&str, Template> = HashMap::new();
        let entries = fs::read_dir(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
        for entry in entries {
            let path = entry.map_err(|e| e.to_string())?.path();
            let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
                continue;
            };
            let Some(stem) = name.strip_suffix(".txt") else { continue };
            let Some((role, version)) = stem.rsplit_once(".v") else { continue };
            let Ok(version) = version.parse::<u32>() else { continue };
            let Some((role, _)) = SHIPPED.iter().find(|(r, _)| *r == role) else {
                continue;
            };
            if by_role.get(role).is_some_and(|t| t.version >= version) {
                continue;
            }
            let text = fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
            by_role.insert(role, Template::parse(role, version, &text)?);
        }
        for (role, text) in SHIPPED {
            by_role
                .entry(role)
                .or_insert_with(|| Template::parse(role, 1, text).expect("shipped template parses"));
        }
        Ok(Self::from_map(&mut by_role))
    }

    fn from_map(m: &mut HashMap<&str, Template>) -> Self {
        let mut take = |r: &str| m.remove(r).expect("every role present");
        Self {
            questions: take("questions"),
            answer: take("answer"),
            verdict: take("verdict"),
            sufficiency: take("sufficiency"),
            zero_shot: take("zero_shot"),
            few_shot: take("few_shot"),
            web_search: take("web_search"),
        }
    }

    pub fn versions(&self) -> Vec<(String, u32)> {
        [
            &self.questions,
            &self.answer,
            &self.verdict,
            &self.sufficiency,
            &self.zero_shot,
            &self.few_shot,
            &self.web_search,
        ]
        .iter()
        .map(|t| (t.role.clone(), t.version))
        .collect()
    }
}
