#!/usr/bin/env python3
"""Decode the golden fixtures with an implementation independent of the Rust
code: hashlib/hmac, the `cryptography` package, and a local HChaCha20.

Starts from the password alone and walks envelope -> master key -> owner
block -> content -> file MAC -> fhf root and tag.
"""
import base64
import hashlib
import hmac
import struct
import sys
from pathlib import Path

from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

FIX = Path(__file__).resolve().parent.parent / "crates" / "core" / "tests" / "fixtures"
PREFIX = b"e2ee-vault/v1/"
PASSWORD = b"golden fixture password"
CONTENT = b"golden fixture content\n"


def rotl(v, n):
    return ((v << n) & 0xFFFFFFFF) | (v >> (32 - n))


def hchacha20(key, nonce16):
    s = list(struct.unpack("<4I", b"expand 32-byte k")) + list(struct.unpack("<8I", key)) + list(struct.unpack("<4I", nonce16))

    def qr(a, b, c, d):
        s[a] = (s[a] + s[b]) & 0xFFFFFFFF; s[d] = rotl(s[d] ^ s[a], 16)
        s[c] = (s[c] + s[d]) & 0xFFFFFFFF; s[b] = rotl(s[b] ^ s[c], 12)
        s[a] = (s[a] + s[b]) & 0xFFFFFFFF; s[d] = rotl(s[d] ^ s[a], 8)
        s[c] = (s[c] + s[d]) & 0xFFFFFFFF; s[b] = rotl(s[b] ^ s[c], 7)

    for _ in range(10):
        qr(0, 4, 8, 12); qr(1, 5, 9, 13); qr(2, 6, 10, 14); qr(3, 7, 11, 15)
        qr(0, 5, 10, 15); qr(1, 6, 11, 12); qr(2, 7, 8, 13); qr(3, 4, 9, 14)
    return struct.pack("<8I", *(s[0:4] + s[12:16]))


def xchacha_open(key, box, aad):
    nonce, body = box[:24], box[24:]
    sub = hchacha20(key, nonce[:16])
    return ChaCha20Poly1305(sub).decrypt(b"\0" * 4 + nonce[16:], body, aad)


def hkdf(ikm, info):
    return HKDF(algorithm=hashes.SHA256(), length=32, salt=None, info=info).derive(ikm)


def main():
    env = (FIX / "password_envelope.bin").read_bytes()
    assert env[:4] == b"PWE1" and len(env) == 100
    salt = env[4:20]
    iterations = struct.unpack("<I", env[20:24])[0]
    assert env[24:28] == b"\0\0\0\0"
    pw_key = hashlib.pbkdf2_hmac("sha256", PASSWORD, salt, iterations, 32)
    master = xchacha_open(pw_key, env[28:], env[:28])
    assert len(master) == 32

    ticket = base64.b64decode((FIX / "share_ticket.txt").read_text().strip())
    assert ticket[:4] == b"TKT1" and len(ticket) == 52
    owner_pk = ticket[20:]

    f = (FIX / "encrypted_file.e2ef").read_bytes()
    assert f[:5] == b"E2EF\x01"
    block_key = hkdf(master, PREFIX + b"owner-block" + owner_pk)
    plain = xchacha_open(block_key, f[5:5 + 128], f[:5])
    assert len(plain) == 88
    uid, fek, fsk, offset = plain[:16], plain[16:48], plain[48:80], struct.unpack("<Q", plain[80:])[0]
    assert uid == hashlib.sha256(owner_pk).digest()[:16]
    assert offset == 5 + 2 * 128, offset
    content_box = f[offset:-32]
    assert xchacha_open(fek, content_box, f[:5]) == CONTENT
    assert hmac.compare_digest(hmac.new(fsk, content_box, hashlib.sha256).digest(), f[-32:])

    fhf = (FIX / "dir.fhf").read_bytes()
    assert fhf[:4] == b"FHF1" and len(fhf) == 76
    root = hashlib.sha256(b"\x00" + b"doc.e2ef" + hashlib.sha256(f[:offset]).digest()).digest()
    assert fhf[4:36] == root
    ts = struct.unpack("<Q", fhf[36:44])[0]
    assert ts == 1_700_000_000
    tag = hmac.new(hkdf(master, PREFIX + b"fhf"), root + fhf[36:44], hashlib.sha256).digest()
    assert hmac.compare_digest(tag, fhf[44:])
    print("fixtures verified by independent oracle")


if __name__ == "__main__":
    sys.exit(main())
