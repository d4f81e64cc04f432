#!/usr/bin/env python3
"""Independent reference implementation of the signature-to-filter transform.

Computes (target_label, row, col, bit pattern) from a signature using four
domain-separated SHA-256 hashes. Used once to freeze the golden vectors in
crates/core/tests/data/transform_golden.txt; the Rust implementation is
checked against that file and must never be used to regenerate it.

Usage: python3 tools/transform_oracle.py > crates/core/tests/data/transform_golden.txt
"""

import hashlib

TAG_LABEL = b"wm-label"
TAG_ROW = b"wm-row"
TAG_COL = b"wm-col"
TAG_BITS = b"wm-bits"


def h(tag: bytes, msg: bytes) -> bytes:
    return hashlib.sha256(tag + msg).digest()


def h_int(tag: bytes, msg: bytes) -> int:
    return int.from_bytes(h(tag, msg), "big")


def bit_stream(sig: bytes, nbits: int) -> bytes:
    """First nbits of SHA256(TAG_BITS || sig || be32(counter)) for counter = 0, 1, ...

    Bits are consumed MSB-first within each byte and packed the same way;
    trailing bits of the last byte are zero.
    """
    raw = b""
    counter = 0
    while len(raw) * 8 < nbits:
        raw += h(TAG_BITS, sig + counter.to_bytes(4, "big"))
        counter += 1
    nbytes = (nbits + 7) // 8
    out = bytearray(raw[:nbytes])
    # zero the padding bits after the nbits-th bit
    rem = nbits % 8
    if rem != 0:
        out[-1] &= (0xFF << (8 - rem)) & 0xFF
    return bytes(out)


def transform(sig: bytes, shape, block, num_labels: int):
    if len(shape) == 3:
        rows, cols = shape[1], shape[2]
    else:
        rows, cols = shape
    n_r, n_c = block
    assert n_r <= rows and n_c <= cols and num_labels >= 1
    label = h_int(TAG_LABEL, sig) % num_labels
    row = h_int(TAG_ROW, sig) % (rows - n_r + 1)
    col = h_int(TAG_COL, sig) % (cols - n_c + 1)
    bits = bit_stream(sig, n_r * n_c)
    return label, row, col, bits


FIXTURES = [
    (bytes([0xAB] * 64), (1, 8, 8), (2, 2), 2),
    (bytes([0x00] * 64), (8, 64), (4, 32), 2),
    (bytes(range(64)), (8, 64), (4, 32), 2),
    (bytes([0xFF] * 64), (4, 32), (4, 32), 2),
    (bytes([0x5A] * 64), (9, 9), (3, 3), 10),
    (bytes([0x11] * 32), (2, 2), (2, 2), 1),
    (bytes([i * 7 % 256 for i in range(64)]), (16, 16), (5, 7), 4),
    (bytes([0xC3] * 64), (24, 24), (17, 17), 3),
]


def main():
    print("# sig_hex shape block num_labels -> label row col bits_hex")
    for sig, shape, block, labels in FIXTURES:
        label, row, col, bits = transform(sig, shape, block, labels)
        shape_s = "x".join(str(d) for d in shape)
        block_s = "x".join(str(d) for d in block)
        print(
            f"{sig.hex()} {shape_s} {block_s} {labels} "
            f"{label} {row} {col} {bits.hex()}"
        )


if __name__ == "__main__":
    main()
