//! The `bitvm1` machine: a two-register counter machine whose programs are
//! self-delimiting bit strings.
//!
//! Instructions use a complete prefix code:
//!
//! | token | codeword | effect                                   |
//! |-------|----------|------------------------------------------|
//! | INC   | `00`     | `A <- A + 1`                             |
//! | DEC   | `01`     | `A <- max(A - 1, 0)`                     |
//! | SWAP  | `100`    | `A <-> B`                                |
//! | ADD   | `101`    | `A <- A + B`                             |
//! | WHILE | `110`    | if `A = 0` jump past the matching WEND   |
//! | WEND  | `1110`   | jump back to the matching WHILE          |
//! | HALT  | `1111`   | stop, output `A`                         |
//!
//! A bit string is a program iff it decodes exactly, ends with its first
//! HALT, and its WHILE/WEND tokens are balanced. Halting programs therefore
//! form a prefix-free set by construction.

use crate::bits::BitString;

/// Identifier written into corpus files for the default machine.
pub const MACHINE_ID: &str = "bitvm1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Token {
    Inc,
    Dec,
    Swap,
    Add,
    While,
    Wend,
    Halt,
}

impl Token {
    pub const ALL: [Token; 7] = [
        Token::Inc,
        Token::Dec,
        Token::Swap,
        Token::Add,
        Token::While,
        Token::Wend,
        Token::Halt,
    ];

    /// Codeword as `(bits, length)`, first bit most significant.
    #[inline]
    pub const fn codeword(self) -> (u64, u32) {
        match self {
            Token::Inc => (0b00, 2),
            Token::Dec => (0b01, 2),
            Token::Swap => (0b100, 3),
            Token::Add => (0b101, 3),
            Token::While => (0b110, 3),
            Token::Wend => (0b1110, 4),
            Token::Halt => (0b1111, 4),
        }
    }

    #[inline]
    pub const fn code_len(self) -> u32 {
        self.codeword().1
    }

    pub fn mnemonic(self) -> &'static str {
        match self {
            Token::Inc => "INC",
            Token::Dec => "DEC",
            Token::Swap => "SWAP",
            Token::Add => "ADD",
            Token::While => "WHILE",
            Token::Wend => "WEND",
            Token::Halt => "HALT",
        }
    }
}

/// Result of decoding one token.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decoded {
    Token { token: Token, next: u32 },
    /// The remaining bits are a proper prefix of some codeword.
    NeedsMoreBits,
}

/// Decodes the token starting at bit `pos`.
pub fn decode_token(bits: &BitString, pos: u32) -> Decoded {
    assert!(pos <= bits.len(), "decode position past end of input");
    let remaining = bits.len() - pos;
    for token in Token::ALL {
        let (code, len) = token.codeword();
        if len <= remaining {
            let window = (bits.value() >> (remaining - len)) & ((1u64 << len) - 1);
            if window == code {
                return Decoded::Token { token, next: pos + len };
            }
        }
    }
    Decoded::NeedsMoreBits
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("input ends before the program is complete")]
    NeedsMoreBits,
    #[error("not a program")]
    NotAProgram,
}

/// Decodes a whole program. See the module docs for the acceptance rule.
pub fn parse_program(bits: &BitString) -> Result<Vec<Token>, ParseError> {
    let mut tokens = Vec::new();
    let mut pos = 0;
    while pos < bits.len() {
        match decode_token(bits, pos) {
            Decoded::NeedsMoreBits => return Err(ParseError::NeedsMoreBits),
            Decoded::Token { token, next } => {
                tokens.push(token);
                pos = next;
                if token == Token::Halt {
                    if pos != bits.len() || !is_balanced(&tokens) {
                        return Err(ParseError::NotAProgram);
                    }
                    return Ok(tokens);
                }
            }
        }
    }
    Err(ParseError::NeedsMoreBits)
}

/// True iff every WEND closes an earlier WHILE and no WHILE is left open.
pub fn is_balanced(tokens: &[Token]) -> bool {
    let mut depth = 0i64;
    for t in tokens {
        match t {
            Token::While => depth += 1,
            Token::Wend => {
                depth -= 1;
                if depth < 0 {
                    return false;
                }
            }
            _ => {}
        }
    }
    depth == 0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunOutcome {
    Halted { output: u64, steps: u64, consumed: u32 },
    /// Budget exhausted, or a register exceeded the machine's cap. Either way
    /// the program did not halt within `steps_so_far` steps.
    StillRunning { steps_so_far: u64 },
    NeedsMoreBits { consumed_so_far: u32 },
    NotAProgram,
}

impl RunOutcome {
    pub fn is_halted(&self) -> bool {
        matches!(self, RunOutcome::Halted { .. })
    }
}

#[derive(Debug, Clone, Copy)]
enum Op {
    Inc,
    Dec,
    Swap,
    Add,
    /// Target is the index just past the matching WEND.
    While(usize),
    /// Target is the index of the matching WHILE.
    Wend(usize),
    Halt,
}

/// A parsed program with loop targets resolved.
#[derive(Debug, Clone)]
pub struct Program {
    ops: Vec<Op>,
}

/// How a budgeted execution ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Halted { output: u64, steps: u64 },
    Running { steps: u64 },
}

impl Program {
    /// Builds a program from a token list that ends with HALT and is balanced.
    pub fn from_tokens(tokens: &[Token]) -> Result<Self, ParseError> {
        if tokens.last() != Some(&Token::Halt)
            || tokens[..tokens.len() - 1].contains(&Token::Halt)
            || !is_balanced(tokens)
        {
            return Err(ParseError::NotAProgram);
        }
        let mut ops = Vec::with_capacity(tokens.len());
        let mut open = Vec::new();
        for (i, t) in tokens.iter().enumerate() {
            let op = match t {
                Token::Inc => Op::Inc,
                Token::Dec => Op::Dec,
                Token::Swap => Op::Swap,
                Token::Add => Op::Add,
                Token::While => {
                    open.push(i);
                    Op::While(usize::MAX)
                }
                Token::Wend => {
                    let w = open.pop().expect("balanced");
                    ops[w] = Op::While(i + 1);
                    Op::Wend(w)
                }
                Token::Halt => Op::Halt,
            };
            ops.push(op);
        }
        Ok(Program { ops })
    }

    pub fn parse(bits: &BitString) -> Result<Self, ParseError> {
        Program::from_tokens(&parse_program(bits)?)
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// Runs from `(A, B) = (0, 0)` for at most `max_steps` token events.
    /// Registers above `register_cap` abort the run as still running.
    pub fn execute(&self, max_steps: u64, register_cap: u64) -> Execution {
        let ops = &self.ops[..];
        let (mut a, mut b) = (0u64, 0u64);
        let mut pc = 0usize;
        let mut steps = 0u64;
        while steps < max_steps {
            steps += 1;
            match ops[pc] {
                Op::Inc => {
                    a = match a.checked_add(1) {
                        Some(v) if v <= register_cap => v,
                        _ => return Execution::Running { steps },
                    };
                    pc += 1;
                }
                Op::Dec => {
                    a = a.saturating_sub(1);
                    pc += 1;
                }
                Op::Swap => {
                    std::mem::swap(&mut a, &mut b);
                    pc += 1;
                }
                Op::Add => {
                    a = match a.checked_add(b) {
                        Some(v) if v <= register_cap => v,
                        _ => return Execution::Running { steps },
                    };
                    pc += 1;
                }
                Op::While(exit) => pc = if a == 0 { exit } else { pc + 1 },
                Op::Wend(head) => pc = head,
                Op::Halt => return Execution::Halted { output: a, steps },
            }
        }
        Execution::Running { steps }
    }
}

/// Machine configuration. The only knob is the register cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Machine {
    pub register_cap: u64,
}

impl Default for Machine {
    fn default() -> Self {
        Machine { register_cap: u64::MAX }
    }
}

impl Machine {
    pub fn with_register_cap(register_cap: u64) -> Self {
        Machine { register_cap }
    }

    /// Identifier recorded in corpus files; differs from [`MACHINE_ID`] when
    /// the register cap is not the default.
    pub fn id(&self) -> String {
        if self.register_cap == u64::MAX {
            MACHINE_ID.to_string()
        } else {
            format!("{MACHINE_ID}-cap{}", self.register_cap)
        }
    }

    pub fn run(&self, bits: &BitString, max_steps: u64) -> RunOutcome {
        let program = match Program::parse(bits) {
            Ok(p) => p,
            Err(ParseError::NeedsMoreBits) => {
                return RunOutcome::NeedsMoreBits { consumed_so_far: bits.len() }
            }
            Err(ParseError::NotAProgram) => return RunOutcome::NotAProgram,
        };
        match program.execute(max_steps, self.register_cap) {
            Execution::Halted { output, steps } => RunOutcome::Halted {
                output,
                steps,
                consumed: bits.len(),
            },
            Execution::Running { steps } => RunOutcome::StillRunning { steps_so_far: steps },
        }
    }
}

/// Runs `bits` on the default machine.
pub fn run(bits: &BitString, max_steps: u64) -> RunOutcome {
    Machine::default().run(bits, max_steps)
}

/// Encodes a token list as a bit string.
pub fn encode(tokens: &[Token]) -> BitString {
    tokens.iter().fold(BitString::EMPTY, |s, t| {
        let (code, len) = t.codeword();
        s.append(code, len)
    })
}
