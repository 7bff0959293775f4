use super::{DatasetSplit, Interactions, UserSequence, UserSplit};
use crate::error::{Error, Result};

/// Groups interactions per user in ascending timestamp order. Ties keep input order.
pub fn build_sequences(data: &Interactions) -> Vec<UserSequence> {
    let mut per_user: Vec<Vec<(i64, usize)>> = vec![Vec::new(); data.n_users()];
    for rec in &data.records {
        per_user[rec.user].push((rec.timestamp, rec.item));
    }
    per_user
        .into_iter()
        .enumerate()
        .map(|(user, mut events)| {
            // sort_by_key is stable
            events.sort_by_key(|&(ts, _)| ts);
            UserSequence {
                user,
                items: events.into_iter().map(|(_, item)| item).collect(),
            }
        })
        .collect()
}

/// Last item is the test target, second-to-last the validation target.
/// Sequences shorter than three are dropped and counted in `excluded`.
pub fn leave_one_out_split(sequences: &[UserSequence]) -> DatasetSplit {
    let mut split = DatasetSplit::default();
    for seq in sequences {
        let n = seq.items.len();
        if n < 3 {
            split.excluded += 1;
            continue;
        }
        split.users.push(UserSplit {
            user: seq.user,
            train: seq.items[..n - 2].to_vec(),
            valid: seq.items[n - 2],
            test: seq.items[n - 1],
        });
    }
    if split.excluded > 0 {
        log::warn!(
            "{} sequences shorter than 3 excluded from the split",
            split.excluded
        );
    }
    split
}

/// The most recent `min(position, max_len)` items strictly before `position`, oldest first.
pub fn history_window(items: &[usize], position: usize, max_len: usize) -> Result<&[usize]> {
    if position == 0 {
        return Err(Error::Data("position 0 has no history".into()));
    }
    if position > items.len() {
        return Err(Error::Data(format!(
            "position {position} beyond sequence of length {}",
            items.len()
        )));
    }
    let start = position.saturating_sub(max_len);
    Ok(&items[start..position])
}
