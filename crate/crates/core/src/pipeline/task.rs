use serde::{Deserialize, Serialize};

pub const DEFAULT_SHORT_TASK_WINDOW: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Horizon {
    Long,
    Short,
}

impl Horizon {
    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim().trim_end_matches('.').to_lowercase();
        if s.starts_with("long") {
            Some(Horizon::Long)
        } else if s.starts_with("short") {
            Some(Horizon::Short)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub description: String,
    pub horizon: Horizon,
    pub created_iter: u64,
    /// Iterations in which this task has been the active one.
    #[serde(default)]
    pub active_iters: u32,
}

impl TaskSpec {
    pub fn new(description: &str, horizon: Horizon, created_iter: u64) -> Self {
        Self { description: description.to_string(), horizon, created_iter, active_iters: 0 }
    }
}

/// Why the stack changed during one update.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "change")]
pub enum TaskChange {
    Completed { description: String },
    Expired { description: String },
    Adopted { description: String, horizon: Horizon },
}

/// Long-horizon tasks stacked in adoption order, with at most one short
/// task on top. A short task yields after it has been active for `window`
/// iterations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskStack {
    tasks: Vec<TaskSpec>,
    window: u32,
}

impl TaskStack {
    pub fn new(window: u32) -> Self {
        assert!(window >= 1, "short task window must be at least 1");
        Self { tasks: Vec::new(), window }
    }

    pub fn with_goal(window: u32, goal: &str) -> Self {
        let mut s = Self::new(window);
        s.tasks.push(TaskSpec::new(goal, Horizon::Long, 0));
        s
    }

    pub fn active(&self) -> Option<&TaskSpec> {
        self.tasks.last()
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn tasks(&self) -> &[TaskSpec] {
        &self.tasks
    }

    /// One iteration of task bookkeeping: pop the active task if it is done,
    /// expire a short task whose window is used up, adopt `proposed`, then
    /// count the iteration against whichever task is now active.
    pub fn update(&mut self, task_done: bool, proposed: Option<TaskSpec>) -> Vec<TaskChange> {
        let mut changes = Vec::new();
        if task_done {
            if let Some(t) = self.tasks.pop() {
                changes.push(TaskChange::Completed { description: t.description });
            }
        }
        let mut expired = None;
        if let Some(t) = self.tasks.last() {
            if t.horizon == Horizon::Short && t.active_iters >= self.window {
                let t = self.tasks.pop().expect("checked above");
                changes.push(TaskChange::Expired { description: t.description.clone() });
                expired = Some(t.description);
            }
        }
        if let Some(mut p) = proposed {
            let same = self.active().is_some_and(|a| a.description == p.description && a.horizon == p.horizon);
            // A task whose window just ran out is not re-adopted on the same
            // iteration, so the stack below always gets its turn.
            let just_expired = expired.as_deref() == Some(p.description.as_str());
            if !same && !just_expired {
                if self.active().is_some_and(|a| a.horizon == Horizon::Short) {
                    self.tasks.pop();
                }
                p.active_iters = 0;
                changes.push(TaskChange::Adopted { description: p.description.clone(), horizon: p.horizon });
                self.tasks.push(p);
            }
        }
        if let Some(t) = self.tasks.last_mut() {
            t.active_iters += 1;
        }
        changes
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReflectionOutcome {
    pub last_action_ok: bool,
    pub task_done: bool,
    pub failure_analysis: String,
    pub continue_held_action: bool,
}

impl ReflectionOutcome {
    /// Used when there is no previous action to judge.
    pub fn bootstrap() -> Self {
        Self { last_action_ok: true, task_done: false, failure_analysis: String::new(), continue_held_action: false }
    }

    pub fn new(last_action_ok: bool, task_done: bool, analysis: &str, continue_held_action: bool) -> Self {
        let mut failure_analysis = analysis.trim().to_string();
        if !last_action_ok && failure_analysis.is_empty() {
            failure_analysis = "no analysis given".to_string();
        }
        Self { last_action_ok, task_done, failure_analysis, continue_held_action }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn active(s: &TaskStack) -> &str {
        &s.active().unwrap().description
    }

    #[test]
    fn short_task_yields_after_window() {
        let mut s = TaskStack::with_goal(3, "build farm");
        s.update(false, None);
        // iteration t adopts a short task
        s.update(false, Some(TaskSpec::new("talk to npc", Horizon::Short, 1)));
        assert_eq!(active(&s), "talk to npc");
        s.update(false, None);
        assert_eq!(active(&s), "talk to npc");
        s.update(false, None);
        assert_eq!(active(&s), "talk to npc");
        // t + 3
        let changes = s.update(false, None);
        assert_eq!(active(&s), "build farm");
        assert!(matches!(&changes[0], TaskChange::Expired { .. }));
    }

    #[test]
    fn repeated_proposal_still_yields() {
        let mut s = TaskStack::with_goal(3, "build farm");
        let seen: Vec<String> = (0..5)
            .map(|_| {
                s.update(false, Some(TaskSpec::new("talk to npc", Horizon::Short, 1)));
                active(&s).to_string()
            })
            .collect();
        assert_eq!(seen, ["talk to npc", "talk to npc", "talk to npc", "build farm", "talk to npc"]);
    }

    #[test]
    fn completion_pops_and_nothing_proposed_keeps() {
        let mut s = TaskStack::with_goal(3, "a");
        s.update(false, Some(TaskSpec::new("b", Horizon::Long, 1)));
        assert_eq!(active(&s), "b");
        s.update(false, None);
        assert_eq!(active(&s), "b");
        s.update(true, None);
        assert_eq!(active(&s), "a");
    }

    #[test]
    fn at_most_one_short_task() {
        let mut s = TaskStack::with_goal(3, "a");
        s.update(false, Some(TaskSpec::new("s1", Horizon::Short, 1)));
        s.update(false, Some(TaskSpec::new("s2", Horizon::Short, 2)));
        assert_eq!(s.len(), 2);
        assert_eq!(active(&s), "s2");
    }

    #[test]
    fn failure_needs_analysis() {
        assert!(!ReflectionOutcome::new(false, false, " ", false).failure_analysis.is_empty());
        assert_eq!(ReflectionOutcome::bootstrap().last_action_ok, true);
    }

    proptest! {
        // Enumerates update sequences: a short task never stays active for
        // more than `window` consecutive iterations, and never more than one
        // short task is on the stack.
        #[test]
        fn short_window_state_machine(window in 1u32..5, ops in proptest::collection::vec((any::<bool>(), 0u8..4), 1..60)) {
            let mut s = TaskStack::with_goal(window, "root");
            let mut run = 0u32;
            let mut last: Option<String> = None;
            for (i, (done, prop)) in ops.into_iter().enumerate() {
                let proposed = match prop {
                    0 | 1 => None,
                    2 => Some(TaskSpec::new(&format!("short{i}"), Horizon::Short, i as u64)),
                    _ => Some(TaskSpec::new(&format!("long{i}"), Horizon::Long, i as u64)),
                };
                s.update(done && i % 3 == 0, proposed);
                let shorts = s.tasks().iter().filter(|t| t.horizon == Horizon::Short).count();
                prop_assert!(shorts <= 1);
                if shorts == 1 {
                    prop_assert_eq!(s.active().unwrap().horizon, Horizon::Short);
                }
                match s.active() {
                    Some(t) if t.horizon == Horizon::Short => {
                        run = if last.as_deref() == Some(t.description.as_str()) { run + 1 } else { 1 };
                        prop_assert!(run <= window);
                        last = Some(t.description.clone());
                    }
                    _ => { run = 0; last = None; }
                }
            }
        }
    }
}
