use rand::Rng;
use std::net::Ipv4Addr;

/// The 5-tuple a firewall decision depends on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub struct PacketHeader {
    pub src_ip: u32,
    pub src_port: u16,
    pub dst_ip: u32,
    pub dst_port: u16,
    pub proto: u8,
}

impl PacketHeader {
    pub fn new(src: Ipv4Addr, src_port: u16, dst: Ipv4Addr, dst_port: u16, proto: u8) -> Self {
        Self {
            src_ip: u32::from(src),
            src_port,
            dst_ip: u32::from(dst),
            dst_port,
            proto,
        }
    }

    /// Only the source address set; everything else zero.
    pub fn from_src(src: Ipv4Addr) -> Self {
        Self::new(src, 0, Ipv4Addr::UNSPECIFIED, 0, 0)
    }

    pub fn src(&self) -> Ipv4Addr {
        Ipv4Addr::from(self.src_ip)
    }

    pub fn dst(&self) -> Ipv4Addr {
        Ipv4Addr::from(self.dst_ip)
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        const PROTOS: [u8; 3] = [6, 17, 1];
        Self {
            src_ip: rng.gen(),
            src_port: rng.gen(),
            dst_ip: rng.gen(),
            dst_port: rng.gen(),
            proto: PROTOS[rng.gen_range(0..PROTOS.len())],
        }
    }
}
