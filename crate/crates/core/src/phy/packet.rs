use crate::error::{Error, Result};

/// Alternating preamble shared by every node and the BS.
pub const PREAMBLE: u32 = 0xAAAA_AAAA;
pub const SYNC_WORD: u32 = 0x930B_51DE;
pub const PREAMBLE_BITS: usize = 32;
pub const SYNC_BITS: usize = 32;
/// Preamble, sync word, length byte and CRC.
pub const OVERHEAD_BITS: usize = PREAMBLE_BITS + SYNC_BITS + 8 + 16;

/// CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection, no final xor.
pub fn crc16_ccitt_false(data: &[u8]) -> u16 {
    let mut crc: u16 = 0xFFFF;
    for &byte in data {
        crc ^= (byte as u16) << 8;
        for _ in 0..8 {
            crc = if crc & 0x8000 != 0 { (crc << 1) ^ 0x1021 } else { crc << 1 };
        }
    }
    crc
}

/// MSB-first bits of `value`, lowest `n` bits.
pub fn word_bits(value: u64, n: usize) -> Vec<bool> {
    (0..n).rev().map(|i| (value >> i) & 1 == 1).collect()
}

pub fn bytes_to_bits(bytes: &[u8]) -> Vec<bool> {
    bytes.iter().flat_map(|&b| word_bits(b as u64, 8)).collect()
}

/// Packs MSB-first bits; a trailing partial byte is zero-padded.
pub fn bits_to_bytes(bits: &[bool]) -> Vec<u8> {
    bits.chunks(8).map(|c| c.iter().enumerate().fold(0u8, |acc, (i, &b)| acc | ((b as u8) << (7 - i)))).collect()
}

/// Preamble followed by the sync word: the pattern the BS correlates against.
pub fn preamble_sync_bits() -> Vec<bool> {
    let mut bits = word_bits(PREAMBLE as u64, PREAMBLE_BITS);
    bits.extend(word_bits(SYNC_WORD as u64, SYNC_BITS));
    bits
}

/// Number of on-air bits for a frame carrying `payload_len` bytes.
pub fn frame_bits(payload_len: usize) -> usize {
    OVERHEAD_BITS + 8 * payload_len
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FrameError {
    Truncated,
    BadPreamble,
    BadSync,
    BadCrc { expected: u16, found: u16 },
}

/// One over-the-air frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SnowPacket {
    pub preamble: u32,
    pub sync_word: u32,
    pub payload: Vec<u8>,
    pub crc: u16,
}

impl SnowPacket {
    pub fn new(payload: Vec<u8>) -> Result<Self> {
        if payload.len() > u8::MAX as usize {
            return Err(Error::invalid(format!("payload of {} bytes exceeds 255", payload.len())));
        }
        let crc = Self::compute_crc(&payload);
        Ok(Self { preamble: PREAMBLE, sync_word: SYNC_WORD, payload, crc })
    }

    pub fn payload_length(&self) -> u8 {
        self.payload.len() as u8
    }

    fn compute_crc(payload: &[u8]) -> u16 {
        let mut buf = Vec::with_capacity(payload.len() + 1);
        buf.push(payload.len() as u8);
        buf.extend_from_slice(payload);
        crc16_ccitt_false(&buf)
    }

    pub fn crc_ok(&self) -> bool {
        self.crc == Self::compute_crc(&self.payload)
    }

    pub fn to_bits(&self) -> Vec<bool> {
        let mut bits = word_bits(self.preamble as u64, PREAMBLE_BITS);
        bits.extend(word_bits(self.sync_word as u64, SYNC_BITS));
        bits.extend(word_bits(self.payload_length() as u64, 8));
        bits.extend(bytes_to_bits(&self.payload));
        bits.extend(word_bits(self.crc as u64, 16));
        bits
    }

    /// Parses a full frame (preamble included) and checks sync word and CRC.
    pub fn from_bits(bits: &[bool]) -> std::result::Result<Self, FrameError> {
        if bits.len() < OVERHEAD_BITS {
            return Err(FrameError::Truncated);
        }
        let sync = bits_to_u64(&bits[PREAMBLE_BITS..PREAMBLE_BITS + SYNC_BITS]) as u32;
        if sync != SYNC_WORD {
            return Err(FrameError::BadSync);
        }
        let preamble = bits_to_u64(&bits[..PREAMBLE_BITS]) as u32;
        if preamble != PREAMBLE {
            return Err(FrameError::BadPreamble);
        }
        Self::from_header_bits(preamble, &bits[PREAMBLE_BITS + SYNC_BITS..])
    }

    /// Parses the length byte, payload and CRC that follow the sync word.
    pub fn from_header_bits(preamble: u32, rest: &[bool]) -> std::result::Result<Self, FrameError> {
        if rest.len() < 8 {
            return Err(FrameError::Truncated);
        }
        let len = bits_to_u64(&rest[..8]) as usize;
        let need = 8 + 8 * len + 16;
        if rest.len() < need {
            return Err(FrameError::Truncated);
        }
        let payload = bits_to_bytes(&rest[8..8 + 8 * len]);
        let crc = bits_to_u64(&rest[8 + 8 * len..need]) as u16;
        let pkt = Self { preamble, sync_word: SYNC_WORD, payload, crc };
        if !pkt.crc_ok() {
            return Err(FrameError::BadCrc { expected: Self::compute_crc(&pkt.payload), found: crc });
        }
        Ok(pkt)
    }
}

pub fn bits_to_u64(bits: &[bool]) -> u64 {
    bits.iter().fold(0u64, |acc, &b| (acc << 1) | b as u64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crc_check_value() {
        assert_eq!(crc16_ccitt_false(b"123456789"), 0x29B1);
    }

    #[test]
    fn frame_round_trip() {
        let pkt = SnowPacket::new((0..30).collect()).unwrap();
        let bits = pkt.to_bits();
        assert_eq!(bits.len(), frame_bits(30));
        assert_eq!(bits.len(), 328);
        assert_eq!(SnowPacket::from_bits(&bits).unwrap(), pkt);
    }

    #[test]
    fn single_bit_flip_detected() {
        let pkt = SnowPacket::new(b"white space".to_vec()).unwrap();
        let bits = pkt.to_bits();
        for i in PREAMBLE_BITS..bits.len() {
            let mut b = bits.clone();
            b[i] = !b[i];
            assert!(SnowPacket::from_bits(&b).is_err(), "flip at {i} undetected");
        }
    }

    #[test]
    fn oversized_payload_rejected() {
        assert!(SnowPacket::new(vec![0; 256]).is_err());
    }
}
