//! Permutation tracking encoded as chess moves in source/target notation.
//!
//! Five black pieces on rank 8 (files a-e) stand for five tracked items.
//! Each transposition of two items becomes a fixed 12-move sequence that
//! physically exchanges the two pieces, interleaved with white king tempo
//! moves a1<->b1 so the side to move alternates. A word of permutations is
//! encoded move sequence by move sequence; at the end, the answer to "did
//! the first item return to position 1" is read off by checking whether
//! the rook is back on a8.
//!
//! Move legality is geometric only: piece movement patterns, slider
//! obstruction, and capture targets. There is no check, castling, en
//! passant, promotion, or draw rule. An illegal move yields an absorbing
//! null state rather than an error.

use crate::algebra::{symmetric_permutations, FiniteGroup};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ChessError {
    #[error("square out of range")]
    SquareOutOfRange,
    #[error("move source equals target")]
    NullMove,
    #[error("invalid transposition ({0}, {1}); need 1 <= i < j <= 5")]
    InvalidTransposition(usize, usize),
    #[error("invalid square literal {0:?}")]
    BadSquareLiteral(String),
    #[error("invalid move literal {0:?}")]
    BadMoveLiteral(String),
}

/// Board square; `file` 0..8 maps to a..h, `rank` 0..8 maps to 1..8.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Square {
    file: u8,
    rank: u8,
}

impl Square {
    pub fn new(file: u8, rank: u8) -> Result<Self, ChessError> {
        if file >= 8 || rank >= 8 {
            return Err(ChessError::SquareOutOfRange);
        }
        Ok(Square { file, rank })
    }

    pub fn file(&self) -> u8 {
        self.file
    }

    pub fn rank(&self) -> u8 {
        self.rank
    }
}

impl fmt::Display for Square {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", (b'a' + self.file) as char, self.rank + 1)
    }
}

impl FromStr for Square {
    type Err = ChessError;
    fn from_str(s: &str) -> Result<Self, ChessError> {
        let bytes = s.as_bytes();
        if bytes.len() != 2 {
            return Err(ChessError::BadSquareLiteral(s.to_string()));
        }
        let file = bytes[0].wrapping_sub(b'a');
        let rank = bytes[1].wrapping_sub(b'1');
        Square::new(file, rank).map_err(|_| ChessError::BadSquareLiteral(s.to_string()))
    }
}

/// A move as a (source, target) pair of squares.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Move {
    pub source: Square,
    pub target: Square,
}

impl Move {
    pub fn new(source: Square, target: Square) -> Result<Self, ChessError> {
        if source == target {
            return Err(ChessError::NullMove);
        }
        Ok(Move { source, target })
    }
}

impl fmt::Display for Move {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.source, self.target)
    }
}

impl FromStr for Move {
    type Err = ChessError;
    fn from_str(s: &str) -> Result<Self, ChessError> {
        if s.len() != 4 {
            return Err(ChessError::BadMoveLiteral(s.to_string()));
        }
        let source: Square =
            s[0..2].parse().map_err(|_| ChessError::BadMoveLiteral(s.to_string()))?;
        let target: Square =
            s[2..4].parse().map_err(|_| ChessError::BadMoveLiteral(s.to_string()))?;
        Move::new(source, target).map_err(|_| ChessError::BadMoveLiteral(s.to_string()))
    }
}

/// Renders a move list as whitespace-separated lowercase square pairs.
pub fn format_uci(moves: &[Move]) -> String {
    moves.iter().map(|m| m.to_string()).collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Color {
    White,
    Black,
}

impl Color {
    fn other(self) -> Color {
        match self {
            Color::White => Color::Black,
            Color::Black => Color::White,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PieceKind {
    King,
    Queen,
    Rook,
    Pawn,
}

/// A piece, optionally carrying an identity tag. Tags are a test-only
/// channel for reading permutations off the board; they play no role in
/// move legality or the accept predicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Piece {
    pub kind: PieceKind,
    pub color: Color,
    pub tag: Option<u8>,
}

/// 8x8 occupancy grid with a null flag. Null is absorbing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoardState {
    grid: [[Option<Piece>; 8]; 8],
    is_null: bool,
    side_to_move: Color,
    enforce_turns: bool,
}

impl BoardState {
    /// The constructed position: black rook a8 (tag 0), black queens b8-e8
    /// (tags 1-4), white pawns a2 and b2, white king a1, black king h1.
    /// Black moves first.
    pub fn initial() -> BoardState {
        let mut grid = [[None; 8]; 8];
        let mut put = |file: u8, rank: u8, kind, color, tag| {
            grid[rank as usize][file as usize] = Some(Piece { kind, color, tag });
        };
        put(0, 7, PieceKind::Rook, Color::Black, Some(0));
        for file in 1..5u8 {
            put(file, 7, PieceKind::Queen, Color::Black, Some(file));
        }
        put(0, 1, PieceKind::Pawn, Color::White, None);
        put(1, 1, PieceKind::Pawn, Color::White, None);
        put(0, 0, PieceKind::King, Color::White, None);
        put(7, 0, PieceKind::King, Color::Black, None);
        BoardState { grid, is_null: false, side_to_move: Color::Black, enforce_turns: true }
    }

    /// The constructed position with the five rank-8 pieces rearranged so
    /// that `arrangement[p]` names the original occupant (by tag) now at
    /// position `p`. Used by the exhaustive encoder tests.
    pub fn with_rank8_arrangement(arrangement: &[u8; 5]) -> BoardState {
        let mut board = BoardState::initial();
        let originals: Vec<Option<Piece>> =
            (0..5).map(|f| board.grid[7][f as usize]).collect();
        for (pos, &tag) in arrangement.iter().enumerate() {
            board.grid[7][pos] = originals[tag as usize];
        }
        board
    }

    /// Debugging escape hatch: when turn alternation is off, either side
    /// may move at any time.
    pub fn set_enforce_turns(&mut self, enforce: bool) {
        self.enforce_turns = enforce;
    }

    pub fn is_null(&self) -> bool {
        self.is_null
    }

    pub fn side_to_move(&self) -> Color {
        self.side_to_move
    }

    pub fn piece_at(&self, sq: Square) -> Option<Piece> {
        if self.is_null {
            return None;
        }
        self.grid[sq.rank as usize][sq.file as usize]
    }

    pub fn piece_count(&self) -> usize {
        self.grid.iter().flatten().filter(|p| p.is_some()).count()
    }

    fn null() -> BoardState {
        BoardState {
            grid: [[None; 8]; 8],
            is_null: true,
            side_to_move: Color::White,
            enforce_turns: true,
        }
    }

    /// Applies one move. Any rule violation returns the null state.
    pub fn apply_move(&self, mv: Move) -> BoardState {
        if self.is_null {
            return self.clone();
        }
        let piece = match self.piece_at(mv.source) {
            Some(p) => p,
            None => return BoardState::null(),
        };
        if self.enforce_turns && piece.color != self.side_to_move {
            return BoardState::null();
        }
        if !self.pattern_legal(piece, mv) {
            return BoardState::null();
        }
        if let Some(target) = self.piece_at(mv.target) {
            // Same-color occupation is illegal, and kings are never
            // captured (the reduction never attacks one).
            if target.color == piece.color || target.kind == PieceKind::King {
                return BoardState::null();
            }
        }
        let mut next = self.clone();
        next.grid[mv.source.rank as usize][mv.source.file as usize] = None;
        next.grid[mv.target.rank as usize][mv.target.file as usize] = Some(piece);
        next.side_to_move = self.side_to_move.other();
        next
    }

    /// Applies a whole sequence; null absorbs.
    pub fn apply_moves(&self, moves: &[Move]) -> BoardState {
        let mut board = self.clone();
        for &mv in moves {
            board = board.apply_move(mv);
            if board.is_null {
                break;
            }
        }
        board
    }

    /// Geometric movement pattern plus slider obstruction.
    fn pattern_legal(&self, piece: Piece, mv: Move) -> bool {
        let df = mv.target.file as i32 - mv.source.file as i32;
        let dr = mv.target.rank as i32 - mv.source.rank as i32;
        match piece.kind {
            PieceKind::King => df.abs() <= 1 && dr.abs() <= 1,
            PieceKind::Rook => (df == 0 || dr == 0) && self.path_clear(mv),
            PieceKind::Queen => {
                (df == 0 || dr == 0 || df.abs() == dr.abs()) && self.path_clear(mv)
            }
            PieceKind::Pawn => {
                let forward = match piece.color {
                    Color::White => 1,
                    Color::Black => -1,
                };
                if dr != forward {
                    return false;
                }
                match df {
                    0 => self.piece_at(mv.target).is_none(),
                    -1 | 1 => self.piece_at(mv.target).is_some(),
                    _ => false,
                }
            }
        }
    }

    fn path_clear(&self, mv: Move) -> bool {
        let df = (mv.target.file as i32 - mv.source.file as i32).signum();
        let dr = (mv.target.rank as i32 - mv.source.rank as i32).signum();
        let mut f = mv.source.file as i32 + df;
        let mut r = mv.source.rank as i32 + dr;
        while (f, r) != (mv.target.file as i32, mv.target.rank as i32) {
            if self.grid[r as usize][f as usize].is_some() {
                return false;
            }
            f += df;
            r += dr;
        }
        true
    }

    /// Reads the identity tags along rank 8, files a-e. `None` entries mean
    /// an untagged or missing occupant.
    pub fn rank8_tags(&self) -> [Option<u8>; 5] {
        let mut tags = [None; 5];
        if self.is_null {
            return tags;
        }
        for (f, tag) in tags.iter_mut().enumerate() {
            *tag = self.grid[7][f].and_then(|p| p.tag);
        }
        tags
    }
}

/// Reduction output: the final board plus the accept bit derived from it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReductionOutput {
    pub final_board: BoardState,
    pub accept: bool,
}

fn square(file: u8, rank: u8) -> Square {
    Square::new(file, rank).expect("static square")
}

fn mv(sf: u8, sr: u8, tf: u8, tr: u8) -> Move {
    Move::new(square(sf, sr), square(tf, tr)).expect("static move")
}

/// The 12-move exchange of the rank-8 occupants at positions `i` and `j`
/// (1-based, `i < j`). Black piece moves alternate with white king tempo
/// moves a1<->b1. Ranks 7 and 6 are used as staging lanes; both are empty
/// in every reachable position, so the slider paths are always clear.
pub fn encode_transposition(i: usize, j: usize) -> Result<Vec<Move>, ChessError> {
    if i == 0 || j == 0 || i >= j || j > 5 {
        return Err(ChessError::InvalidTransposition(i, j));
    }
    let fi = (i - 1) as u8;
    let fj = (j - 1) as u8;
    let black = [
        mv(fi, 7, fi, 6), // to rank 7
        mv(fj, 7, fj, 5), // to rank 6
        mv(fi, 6, fj, 6), // along rank 7
        mv(fj, 5, fi, 5), // along rank 6
        mv(fj, 6, fj, 7), // back up to rank 8
        mv(fi, 5, fi, 7), // back up to rank 8
    ];
    let mut out = Vec::with_capacity(12);
    for (step, bm) in black.into_iter().enumerate() {
        out.push(bm);
        out.push(if step % 2 == 0 { mv(0, 0, 1, 0) } else { mv(1, 0, 0, 0) });
    }
    Ok(out)
}

/// Encodes a permutation (an `S5` element index) as a move sequence by
/// factoring it into transpositions along its cycles. The identity maps to
/// the empty sequence.
pub fn encode_permutation(perm_index: usize) -> Result<Vec<Move>, ChessError> {
    let perms = symmetric_permutations(5);
    let perm = &perms[perm_index];
    let mut out = Vec::new();
    for (a, b) in cycle_transpositions(perm) {
        out.extend(encode_transposition(a + 1, b + 1)?);
    }
    Ok(out)
}

/// Factors a permutation into transpositions whose left-to-right
/// application (earliest applied first) composes to the permutation: a
/// cycle `(c1 c2 ... cr)` becomes `(c1 c2), (c2 c3), ..., (c_{r-1} c_r)`.
fn cycle_transpositions(perm: &[usize]) -> Vec<(usize, usize)> {
    let mut seen = vec![false; perm.len()];
    let mut out = Vec::new();
    for start in 0..perm.len() {
        if seen[start] || perm[start] == start {
            seen[start] = true;
            continue;
        }
        let mut cycle = Vec::new();
        let mut x = start;
        while !seen[x] {
            seen[x] = true;
            cycle.push(x);
            x = perm[x];
        }
        for w in cycle.windows(2) {
            let (a, b) = (w[0], w[1]);
            out.push((a.min(b), a.max(b)));
        }
    }
    out
}

/// Encodes a word of `S5` element indices, applies it to the constructed
/// initial board, and accepts iff the rook ended back on a8.
pub fn reduce_word(word: &[usize]) -> Result<ReductionOutput, ChessError> {
    let mut moves = Vec::new();
    for &perm in word {
        moves.extend(encode_permutation(perm)?);
    }
    let final_board = BoardState::initial().apply_moves(&moves);
    let accept = !final_board.is_null()
        && matches!(
            final_board.piece_at(square(0, 7)),
            Some(Piece { kind: PieceKind::Rook, .. })
        );
    Ok(ReductionOutput { final_board, accept })
}

/// Oracle for [`reduce_word`]: the word product, computed on the group's
/// Cayley table, maps position 1 to itself.
pub fn word_fixes_first_position(s5: &FiniteGroup, word: &[usize]) -> bool {
    if word.is_empty() {
        return true;
    }
    let product = s5.word_product(word).expect("valid word");
    symmetric_permutations(5)[product][0] == 0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::group_by_id;

    fn sq(s: &str) -> Square {
        s.parse().unwrap()
    }

    fn m(s: &str) -> Move {
        s.parse().unwrap()
    }

    #[test]
    fn initial_board_layout() {
        let b = BoardState::initial();
        assert_eq!(b.piece_count(), 9);
        assert!(!b.is_null());
        assert_eq!(b.side_to_move(), Color::Black);
        let tags = b.rank8_tags();
        assert_eq!(tags, [Some(0), Some(1), Some(2), Some(3), Some(4)]);
        assert_eq!(b.piece_at(sq("a8")).unwrap().kind, PieceKind::Rook);
        assert_eq!(b.piece_at(sq("e8")).unwrap().kind, PieceKind::Queen);
        assert_eq!(b.piece_at(sq("a1")).unwrap().kind, PieceKind::King);
        assert_eq!(b.piece_at(sq("h1")).unwrap().color, Color::Black);
    }

    #[test]
    fn rook_steps_down_one() {
        let b = BoardState::initial().apply_move(m("a8a7"));
        assert!(!b.is_null());
        assert_eq!(b.piece_at(sq("a7")).unwrap().tag, Some(0));
        assert_eq!(b.side_to_move(), Color::White);
    }

    #[test]
    fn blocked_slider_is_null() {
        let b = BoardState::initial().apply_move(m("a8h8"));
        assert!(b.is_null());
    }

    #[test]
    fn null_is_absorbing() {
        let null = BoardState::initial().apply_move(m("a8h8"));
        for text in ["a1b1", "a2a3", "h1g1"] {
            assert!(null.apply_move(m(text)).is_null());
        }
    }

    #[test]
    fn wrong_side_to_move_is_null() {
        // Black to move initially, so a white king move is illegal.
        assert!(BoardState::initial().apply_move(m("a1b1")).is_null());
        let mut free = BoardState::initial();
        free.set_enforce_turns(false);
        assert!(!free.apply_move(m("a1b1")).is_null());
    }

    #[test]
    fn pawn_rules() {
        let mut b = BoardState::initial();
        b.set_enforce_turns(false);
        assert!(!b.apply_move(m("a2a3")).is_null());
        assert!(b.apply_move(m("a2b3")).is_null()); // diagonal without capture
        assert!(b.apply_move(m("a2a4")).is_null()); // no double step here
    }

    #[test]
    fn capture_replaces_target() {
        let mut b = BoardState::initial();
        b.set_enforce_turns(false);
        // March the b-pawn forward until the queen on b8 can be taken by a
        // diagonal capture from a7.
        for text in ["b2b3", "b3b4", "b4b5", "b5b6", "b6b7"] {
            b = b.apply_move(m(text));
            assert!(!b.is_null(), "{text}");
        }
        let after = b.apply_move(m("b7a8"));
        assert!(!after.is_null());
        assert_eq!(after.piece_at(sq("a8")).unwrap().kind, PieceKind::Pawn);
        assert_eq!(after.piece_count(), 8);
    }

    #[test]
    fn kings_are_never_captured() {
        let mut b = BoardState::initial();
        b.set_enforce_turns(false);
        let down_the_e_file = b.apply_move(m("e8e1"));
        assert!(!down_the_e_file.is_null());
        let take_the_king = down_the_e_file.apply_move(m("e1a1"));
        assert!(take_the_king.is_null());
    }

    #[test]
    fn transposition_1_3_matches_published_sequence() {
        let seq = encode_transposition(1, 3).unwrap();
        let expected = [
            "a8a7", "a1b1", "c8c6", "b1a1", "a7c7", "a1b1", "c6a6", "b1a1", "c7c8", "a1b1",
            "a6a8", "b1a1",
        ];
        let got: Vec<String> = seq.iter().map(|mv| mv.to_string()).collect();
        assert_eq!(got, expected);
        assert_eq!(format_uci(&seq), expected.join(" "));
    }

    #[test]
    fn transposition_exchanges_a8_c8() {
        let seq = encode_transposition(1, 3).unwrap();
        let b = BoardState::initial().apply_moves(&seq);
        assert!(!b.is_null());
        assert_eq!(b.rank8_tags(), [Some(2), Some(1), Some(0), Some(3), Some(4)]);
        assert_eq!(b.piece_at(sq("c8")).unwrap().kind, PieceKind::Rook);
        assert_eq!(b.piece_at(sq("a1")).unwrap().kind, PieceKind::King);
        assert_eq!(b.side_to_move(), Color::Black);
        assert_eq!(b.piece_count(), 9);
    }

    #[test]
    fn all_transpositions_legal_and_correct_from_initial() {
        for i in 1..=5usize {
            for j in (i + 1)..=5usize {
                let seq = encode_transposition(i, j).unwrap();
                assert_eq!(seq.len(), 12);
                let b = BoardState::initial().apply_moves(&seq);
                assert!(!b.is_null(), "({i},{j})");
                let tags = b.rank8_tags();
                for p in 0..5 {
                    let expect = if p == i - 1 {
                        j - 1
                    } else if p == j - 1 {
                        i - 1
                    } else {
                        p
                    };
                    assert_eq!(tags[p], Some(expect as u8), "({i},{j}) position {p}");
                }
            }
        }
    }

    #[test]
    fn transpositions_legal_from_every_arrangement() {
        // All 5! rank-8 arrangements x 10 transpositions.
        let perms = symmetric_permutations(5);
        for perm in &perms {
            let mut arrangement = [0u8; 5];
            for (p, &t) in perm.iter().enumerate() {
                arrangement[p] = t as u8;
            }
            let base = BoardState::with_rank8_arrangement(&arrangement);
            for i in 1..=5usize {
                for j in (i + 1)..=5usize {
                    let seq = encode_transposition(i, j).unwrap();
                    let b = base.apply_moves(&seq);
                    assert!(!b.is_null(), "arrangement {arrangement:?} swap ({i},{j})");
                    let got = b.rank8_tags();
                    let mut expect = arrangement;
                    expect.swap(i - 1, j - 1);
                    let expect: Vec<Option<u8>> = expect.iter().map(|&t| Some(t)).collect();
                    assert_eq!(got.to_vec(), expect);
                    assert_eq!(b.piece_count(), 9);
                }
            }
        }
    }

    #[test]
    fn invalid_transpositions_rejected() {
        assert!(encode_transposition(3, 3).is_err());
        assert!(encode_transposition(0, 2).is_err());
        assert!(encode_transposition(2, 6).is_err());
    }

    #[test]
    fn encode_permutation_matches_group_action() {
        let s5 = group_by_id("S5").unwrap();
        let perms = symmetric_permutations(5);
        assert!(encode_permutation(0).unwrap().is_empty());
        for (index, perm) in perms.iter().enumerate() {
            let moves = encode_permutation(index).unwrap();
            let b = BoardState::initial().apply_moves(&moves);
            assert!(!b.is_null(), "perm {index}");
            let tags = b.rank8_tags();
            let expect: Vec<Option<u8>> = perm.iter().map(|&t| Some(t as u8)).collect();
            assert_eq!(tags.to_vec(), expect, "perm {index} ({})", s5.name(index));
        }
    }

    #[test]
    fn single_transposition_is_twelve_moves() {
        let s5 = group_by_id("S5").unwrap();
        let idx = (0..s5.order()).find(|&i| s5.name(i) == "(1 3)").unwrap();
        assert_eq!(encode_permutation(idx).unwrap().len(), 12);
    }

    #[test]
    fn reduce_empty_word_accepts() {
        let out = reduce_word(&[]).unwrap();
        assert!(out.accept);
    }

    #[test]
    fn reduce_word_that_fixes_position_one_accepts() {
        let s5 = group_by_id("S5").unwrap();
        let idx = (0..s5.order()).find(|&i| s5.name(i) == "(2 3)(4 5)").unwrap();
        let out = reduce_word(&[idx]).unwrap();
        assert!(out.accept);
        // And one that moves position 1 must reject.
        let moved = (0..s5.order()).find(|&i| s5.name(i) == "(1 2)").unwrap();
        assert!(!reduce_word(&[moved]).unwrap().accept);
    }

    #[test]
    fn reduction_agrees_with_group_oracle() {
        let s5 = group_by_id("S5").unwrap();
        for seed in 0..60u64 {
            let len = 1 + (seed as usize % 12);
            let word = s5.sample_word(len, 7000 + seed).unwrap();
            let out = reduce_word(&word).unwrap();
            assert_eq!(
                out.accept,
                word_fixes_first_position(&s5, &word),
                "word {word:?}"
            );
        }
    }

    #[test]
    fn uci_round_trip() {
        let mv: Move = "a8a7".parse().unwrap();
        assert_eq!(mv.to_string(), "a8a7");
        assert!("a9a7".parse::<Move>().is_err());
        assert!("a8a8".parse::<Move>().is_err());
        assert!("i1a1".parse::<Move>().is_err());
    }
}
