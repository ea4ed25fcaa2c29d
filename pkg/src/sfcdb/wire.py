"""Byte-stream codec for cross-flow state access requests.

Only packet-specific data travels on the wire; template structure (accesses,
state ids, key derivation) is resolved from the validated job on decode.

Header, 30 bytes, little-endian:

    magic u32 | version u8 | msg_type u8 | instance_id u32 |
    vnf u32 | txn_template u32 | seq u64 | payload_len u32

Payload: field_count u16, then per field
    name_len u16, name utf-8, value_type u8, value
with value encodings int64 (type 0) and length-prefixed utf-8 (type 1).
"""

from __future__ import annotations

import struct

from .errors import BadMagic, MalformedPayload, TruncatedPayload, UnknownTemplate, UnknownVersion
from .model import ValidatedJob
from .tpg import TransactionRequest

MAGIC = 0x44423446
VERSION = 1
MSG_TXN_REQUEST = 1
HEADER_LEN = 30

_HEADER = struct.Struct("<IBBIIIQI")
_INT64 = struct.Struct("<q")

_T_INT = 0
_T_STR = 1


def encode_request(req: TransactionRequest, job: ValidatedJob) -> bytes:
    try:
        vnf_idx = job.vnf_index[req.vnf_id]
        txn_idx = job.txn_index[req.txn_id]
    except KeyError as exc:
        raise UnknownTemplate(str(exc)) from exc
    parts = [struct.pack("<H", len(req.packet_data))]
    for name in req.packet_data:
        value = req.packet_data[name]
        name_b = name.encode()
        parts.append(struct.pack("<H", len(name_b)))
        parts.append(name_b)
        if isinstance(value, bool) or not isinstance(value, (int, str)):
            raise MalformedPayload(f"field {name!r}: unsupported type {type(value).__name__}")
        if isinstance(value, int):
            parts.append(bytes([_T_INT]))
            parts.append(_INT64.pack(value))
        else:
            value_b = value.encode()
            parts.append(bytes([_T_STR]))
            parts.append(struct.pack("<I", len(value_b)))
            parts.append(value_b)
    payload = b"".join(parts)
    header = _HEADER.pack(
        MAGIC, VERSION, MSG_TXN_REQUEST, req.instance_id, vnf_idx, txn_idx, req.seq, len(payload)
    )
    return header + payload


def decode_request(data: bytes, job: ValidatedJob) -> TransactionRequest:
    if len(data) < HEADER_LEN:
        raise TruncatedPayload(f"{len(data)} bytes is shorter than the header")
    magic, version, msg_type, instance_id, vnf_idx, txn_idx, seq, payload_len = _HEADER.unpack_from(
        data, 0
    )
    if magic != MAGIC:
        raise BadMagic(f"0x{magic:08x}")
    if version != VERSION:
        raise UnknownVersion(str(version))
    if msg_type != MSG_TXN_REQUEST:
        raise MalformedPayload(f"message type {msg_type}")
    body = data[HEADER_LEN:]
    if len(body) < payload_len:
        raise TruncatedPayload(f"payload {len(body)} < declared {payload_len}")
    if len(body) > payload_len:
        raise MalformedPayload("trailing bytes after payload")

    pos = 0

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(body):
            raise TruncatedPayload(f"payload ends inside a field at offset {pos}")
        chunk = body[pos : pos + n]
        pos += n
        return chunk

    (field_count,) = struct.unpack("<H", take(2))
    packet_data: dict = {}
    for _ in range(field_count):
        (name_len,) = struct.unpack("<H", take(2))
        try:
            name = take(name_len).decode()
        except UnicodeDecodeError as exc:
            raise MalformedPayload("field name is not utf-8") from exc
        vtype = take(1)[0]
        if vtype == _T_INT:
            (value,) = _INT64.unpack(take(8))
        elif vtype == _T_STR:
            (value_len,) = struct.unpack("<I", take(4))
            try:
                value = take(value_len).decode()
            except UnicodeDecodeError as exc:
                raise MalformedPayload("field value is not utf-8") from exc
        else:
            raise MalformedPayload(f"unknown value type {vtype}")
        packet_data[name] = value
    if pos != payload_len:
        raise MalformedPayload("payload longer than its fields")

    vnf_id = job.vnf_by_index.get(vnf_idx)
    txn_id = job.txn_by_index.get(txn_idx)
    if vnf_id is None or txn_id is None:
        raise UnknownTemplate(f"vnf index {vnf_idx} / txn index {txn_idx}")
    return TransactionRequest(
        seq=seq,
        vnf_id=vnf_id,
        instance_id=instance_id,
        txn_id=txn_id,
        packet_data=packet_data,
        target_keys=job.target_keys_for(txn_id, packet_data),
    )
