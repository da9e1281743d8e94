//! Predefined skill libraries shipped with the runtime.

use super::{parse_many, SkillScript};

pub const GAMES: &str = include_str!("../../presets/games.skill");
pub const SOFTWARE: &str = include_str!("../../presets/software.skill");

/// Scripts of a named preset: `games` or `software`.
pub fn load(name: &str) -> Option<Vec<SkillScript>> {
    let src = match name {
        "games" => GAMES,
        "software" => SOFTWARE,
        _ => return None,
    };
    Some(parse_many(src).expect("bundled presets parse"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::DEFAULT_DURATION_CEILING;
    use crate::skill::{validate, Registry, Skill};

    #[test]
    fn presets_validate_in_order() {
        for name in ["games", "software"] {
            let mut r = Registry::with_natives();
            for s in load(name).unwrap() {
                validate(&s, &r, DEFAULT_DURATION_CEILING).unwrap_or_else(|e| panic!("{name}/{}: {e:?}", s.name));
                r.insert(Skill::Script(s));
            }
        }
        assert!(load("other").is_none());
    }
}
