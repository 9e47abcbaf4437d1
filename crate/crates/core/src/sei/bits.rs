//! MSB-first bit reader/writer with exp-Golomb codes, as used by SEI syntax.

use super::SeiError;

#[derive(Default)]
pub struct BitWriter {
    bytes: Vec<u8>,
    acc: u8,
    nbits: u32,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bit_len(&self) -> usize {
        self.bytes.len() * 8 + self.nbits as usize
    }

    pub fn put_bit(&mut self, bit: bool) {
        self.acc = (self.acc << 1) | u8::from(bit);
        self.nbits += 1;
        if self.nbits == 8 {
            self.bytes.push(self.acc);
            self.acc = 0;
            self.nbits = 0;
        }
    }

    /// u(n): `value` in `n` bits, most significant first.
    pub fn put_bits(&mut self, value: u32, n: u32) {
        debug_assert!(n <= 32);
        debug_assert!(n == 32 || value < (1u32 << n));
        for i in (0..n).rev() {
            self.put_bit((value >> i) & 1 == 1);
        }
    }

    /// ue(v)
    pub fn put_ue(&mut self, value: u32) {
        let code = u64::from(value) + 1;
        let len = 64 - code.leading_zeros();
        for _ in 0..len - 1 {
            self.put_bit(false);
        }
        for i in (0..len).rev() {
            self.put_bit((code >> i) & 1 == 1);
        }
    }

    /// se(v): 0, 1, -1, 2, -2, ... map to 0, 1, 2, 3, 4, ...
    pub fn put_se(&mut self, value: i32) {
        let mapped = if value > 0 {
            (value as u32) * 2 - 1
        } else {
            value.unsigned_abs() * 2
        };
        self.put_ue(mapped);
    }

    /// Stop bit followed by zero bits up to the next byte boundary.
    pub fn put_trailing_bits(&mut self) {
        self.put_bit(true);
        while self.nbits != 0 {
            self.put_bit(false);
        }
    }

    pub fn into_bytes(mut self) -> Vec<u8> {
        if self.nbits != 0 {
            self.acc <<= 8 - self.nbits;
            self.bytes.push(self.acc);
        }
        self.bytes
    }
}

pub struct BitReader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> BitReader<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        Self { data, pos: 0 }
    }

    /// Current position in bits from the start of the payload.
    pub fn offset(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.data.len() * 8 - self.pos
    }

    pub fn get_bit(&mut self) -> Result<bool, SeiError> {
        let byte = self
            .data
            .get(self.pos / 8)
            .ok_or(SeiError::Truncated { bit_offset: self.pos })?;
        let bit = (byte >> (7 - self.pos % 8)) & 1 == 1;
        self.pos += 1;
        Ok(bit)
    }

    pub fn get_bits(&mut self, n: u32) -> Result<u32, SeiError> {
        debug_assert!(n <= 32);
        let mut value = 0u32;
        for _ in 0..n {
            value = (value << 1) | u32::from(self.get_bit()?);
        }
        Ok(value)
    }

    pub fn get_ue(&mut self) -> Result<u32, SeiError> {
        let start = self.pos;
        let mut zeros = 0u32;
        while !self.get_bit()? {
            zeros += 1;
            if zeros > 31 {
                return Err(SeiError::BadExpGolomb { bit_offset: start });
            }
        }
        let suffix = u64::from(self.get_bits(zeros)?);
        let value = (1u64 << zeros) - 1 + suffix;
        u32::try_from(value).map_err(|_| SeiError::BadExpGolomb { bit_offset: start })
    }

    pub fn get_se(&mut self) -> Result<i32, SeiError> {
        let start = self.pos;
        let code = self.get_ue()?;
        let magnitude = i64::from(code / 2 + code % 2);
        let value = if code % 2 == 1 { magnitude } else { -magnitude };
        i32::try_from(value).map_err(|_| SeiError::BadExpGolomb { bit_offset: start })
    }
}
