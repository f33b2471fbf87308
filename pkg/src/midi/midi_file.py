import struct
from dataclasses import dataclass
from typing import List, Optional, Tuple, Union

unpack_header = struct.Struct('>HHH').unpack
pack_header = struct.Struct('>HHH').pack
unpack_length = struct.Struct('>I').unpack
pack_length = struct.Struct('>I').pack

VLQ_MAX = 0x0FFFFFFF
META_END_OF_TRACK = 0x2F
META_TEMPO = 0x51
META_TIME_SIGNATURE = 0x58

# data bytes following a channel status, by high nibble
CHANNEL_DATA_LENGTH = {0x8: 2, 0x9: 2, 0xA: 2, 0xB: 2, 0xC: 1, 0xD: 1, 0xE: 2}


class MidiFormatError(ValueError):
    pass


@dataclass(frozen=True)
class NoteOn:
    channel: int
    pitch: int
    velocity: int


@dataclass(frozen=True)
class NoteOff:
    channel: int
    pitch: int
    velocity: int = 0


@dataclass(frozen=True)
class Tempo:
    microseconds_per_quarter: int


@dataclass(frozen=True)
class TimeSignature:
    numerator: int
    denominator_power: int
    clocks_per_click: int = 24
    thirty_seconds_per_quarter: int = 8

    @property
    def is_4_4(self) -> bool:
        return self.numerator == 4 and self.denominator_power == 2


@dataclass(frozen=True)
class MetaOther:
    type_byte: int
    payload: bytes = b''


@dataclass(frozen=True)
class Other:
    """Any other channel event (status 0xA0-0xEF) or a SysEx event (0xF0/0xF7)."""
    status: int
    payload: bytes = b''


EventKind = Union[NoteOn, NoteOff, Tempo, TimeSignature, MetaOther, Other]


@dataclass(frozen=True)
class MidiEvent:
    delta_ticks: int
    kind: EventKind


def end_of_track(delta_ticks: int = 0) -> MidiEvent:
    return MidiEvent(delta_ticks, MetaOther(META_END_OF_TRACK))


def is_end_of_track(event: MidiEvent) -> bool:
    return isinstance(event.kind, MetaOther) and event.kind.type_byte == META_END_OF_TRACK


@dataclass(frozen=True)
class MidiFile:
    format: int
    division: int
    tracks: Tuple[Tuple[MidiEvent, ...], ...]

    def time_signatures(self) -> List[TimeSignature]:
        return [event.kind for track in self.tracks for event in track
                if isinstance(event.kind, TimeSignature)]

    def final_tick(self) -> int:
        return max((sum(event.delta_ticks for event in track) for track in self.tracks), default=0)


# ---------------------------------------------------------------------------
# Variable-length quantities
# ---------------------------------------------------------------------------

def vlq_decode(data: bytes, offset: int = 0) -> Tuple[int, int]:
    """Reads a variable-length quantity at offset.

    Returns the value and the number of bytes consumed.
    """
    value = 0
    for consumed in range(1, 5):
        pos = offset + consumed - 1
        if pos >= len(data):
            raise MidiFormatError(f"truncated variable-length quantity at offset {offset}")
        byte = data[pos]
        value = (value << 7) | (byte & 0x7F)
        if not byte & 0x80:
            return value, consumed
    raise MidiFormatError(f"variable-length quantity longer than 4 bytes at offset {offset}")


def vlq_encode(value: int) -> bytes:
    if not 0 <= value <= VLQ_MAX:
        raise MidiFormatError(f"value {value} out of range for a variable-length quantity")
    out = [value & 0x7F]
    value >>= 7
    while value:
        out.append((value & 0x7F) | 0x80)
        value >>= 7
    return bytes(reversed(out))


# ---------------------------------------------------------------------------
# Reading
# ---------------------------------------------------------------------------

def _read_chunk(data: bytes, pos: int) -> Tuple[bytes, bytes, int]:
    if pos + 8 > len(data):
        raise MidiFormatError(f"truncated chunk header at offset {pos}")
    tag = data[pos:pos + 4]
    size, = unpack_length(data[pos + 4:pos + 8])
    body = data[pos + 8:pos + 8 + size]
    if len(body) != size:
        raise MidiFormatError(f"truncated {tag!r} chunk: expected {size} bytes, got {len(body)}")
    return tag, body, pos + 8 + size


def _meta_kind(type_byte: int, payload: bytes) -> EventKind:
    if type_byte == META_TEMPO and len(payload) == 3:
        return Tempo(int.from_bytes(payload, 'big'))
    if type_byte == META_TIME_SIGNATURE and len(payload) == 4:
        return TimeSignature(*payload)
    return MetaOther(type_byte, payload)


def _channel_kind(status: int, payload: bytes) -> EventKind:
    kind, channel = status >> 4, status & 0x0F
    if kind == 0x9:
        return NoteOn(channel, payload[0], payload[1])
    if kind == 0x8:
        return NoteOff(channel, payload[0], payload[1])
    return Other(status, payload)


def parse_track(data: bytes) -> Tuple[MidiEvent, ...]:
    """Parses one MTrk body, honouring running status.

    Running status is only ever set by channel status bytes; meta and
    SysEx events leave it untouched. Bytes after End-of-Track are ignored,
    and a track that lacks one gets it appended at its last tick.
    """
    events: List[MidiEvent] = []
    running_status: Optional[int] = None
    pos = 0
    while pos < len(data):
        delta, used = vlq_decode(data, pos)
        pos += used
        if pos >= len(data):
            raise MidiFormatError("truncated event after delta time")

        status = data[pos]
        if status & 0x80:
            pos += 1
        elif running_status is None:
            raise MidiFormatError(f"data byte 0x{status:02X} before any status byte")
        else:
            status = running_status

        if status == 0xFF:
            if pos >= len(data):
                raise MidiFormatError("truncated meta event")
            type_byte = data[pos]
            size, used = vlq_decode(data, pos + 1)
            pos += 1 + used
            payload = data[pos:pos + size]
            if len(payload) != size:
                raise MidiFormatError("truncated meta event payload")
            pos += size
            event = MidiEvent(delta, _meta_kind(type_byte, payload))
            events.append(event)
            if is_end_of_track(event):
                return tuple(events)
        elif status in (0xF0, 0xF7):
            size, used = vlq_decode(data, pos)
            pos += used
            payload = data[pos:pos + size]
            if len(payload) != size:
                raise MidiFormatError("truncated SysEx event")
            pos += size
            events.append(MidiEvent(delta, Other(status, payload)))
        elif status >= 0xF0:
            raise MidiFormatError(f"status 0x{status:02X} is not valid in a MIDI file")
        else:
            running_status = status
            size = CHANNEL_DATA_LENGTH[status >> 4]
            payload = data[pos:pos + size]
            if len(payload) != size:
                raise MidiFormatError("truncated channel event")
            if any(byte & 0x80 for byte in payload):
                raise MidiFormatError(f"status byte inside channel event data at offset {pos}")
            pos += size
            events.append(MidiEvent(delta, _channel_kind(status, payload)))

    events.append(end_of_track())
    return tuple(events)


def parse_midi(data: bytes) -> MidiFile:
    if data[:4] != b'MThd':
        raise MidiFormatError("invalid midi data: missing MThd header")
    _, header, pos = _read_chunk(data, 0)
    if len(header) < 6:
        raise MidiFormatError("MThd chunk shorter than 6 bytes")
    fmt, ntracks, division = unpack_header(header[:6])
    if fmt not in (0, 1, 2):
        raise MidiFormatError(f"unsupported MIDI format {fmt}")
    if division & 0x8000:
        raise MidiFormatError("SMPTE time division is not supported")
    if division == 0:
        raise MidiFormatError("time division must be positive")

    tracks = []
    while len(tracks) < ntracks:
        if pos >= len(data):
            raise MidiFormatError(f"expected {ntracks} tracks, found {len(tracks)}")
        tag, body, pos = _read_chunk(data, pos)
        # alien chunks are skipped
        if tag == b'MTrk':
            tracks.append(parse_track(body))
    return MidiFile(fmt, division, tuple(tracks))


def read_midi_file(path) -> MidiFile:
    with open(path, 'rb') as f:
        return parse_midi(f.read())


# ---------------------------------------------------------------------------
# Writing
# ---------------------------------------------------------------------------

def _check_range(name: str, value: int, high: int):
    if not 0 <= value <= high:
        raise MidiFormatError(f"{name} {value} out of range 0-{high}")


def _encode_kind(kind: EventKind) -> bytes:
    if isinstance(kind, (NoteOn, NoteOff)):
        _check_range("channel", kind.channel, 15)
        _check_range("pitch", kind.pitch, 127)
        _check_range("velocity", kind.velocity, 127)
        status = (0x90 if isinstance(kind, NoteOn) else 0x80) | kind.channel
        return bytes((status, kind.pitch, kind.velocity))
    if isinstance(kind, Tempo):
        _check_range("tempo", kind.microseconds_per_quarter, 0xFFFFFF)
        return b'\xff\x51\x03' + kind.microseconds_per_quarter.to_bytes(3, 'big')
    if isinstance(kind, TimeSignature):
        fields = (kind.numerator, kind.denominator_power,
                  kind.clocks_per_click, kind.thirty_seconds_per_quarter)
        for value in fields:
            _check_range("time signature field", value, 255)
        return b'\xff\x58\x04' + bytes(fields)
    if isinstance(kind, MetaOther):
        _check_range("meta type", kind.type_byte, 0x7F)
        return bytes((0xFF, kind.type_byte)) + vlq_encode(len(kind.payload)) + kind.payload
    if isinstance(kind, Other):
        if kind.status in (0xF0, 0xF7):
            return bytes((kind.status,)) + vlq_encode(len(kind.payload)) + kind.payload
        if not 0xA0 <= kind.status <= 0xEF:
            raise MidiFormatError(f"status 0x{kind.status:02X} cannot be written as a generic event")
        expected = CHANNEL_DATA_LENGTH[kind.status >> 4]
        if len(kind.payload) != expected or any(byte > 0x7F for byte in kind.payload):
            raise MidiFormatError(f"invalid data for status 0x{kind.status:02X}")
        return bytes((kind.status,)) + kind.payload
    raise MidiFormatError(f"unknown event kind {kind!r}")


def write_track(events: Tuple[MidiEvent, ...]) -> bytes:
    if not events or not is_end_of_track(events[-1]):
        raise MidiFormatError("track must end with an End-of-Track event")
    if any(is_end_of_track(event) for event in events[:-1]):
        raise MidiFormatError("End-of-Track may only appear once, at the end of a track")
    out = bytearray()
    for event in events:
        out += vlq_encode(event.delta_ticks)
        out += _encode_kind(event.kind)
    return bytes(out)


def write_midi(midi: MidiFile) -> bytes:
    """Serializes a MidiFile. Every channel event gets an explicit status byte."""
    if midi.format not in (0, 1, 2):
        raise MidiFormatError(f"unsupported MIDI format {midi.format}")
    if not 0 < midi.division < 0x8000:
        raise MidiFormatError(f"division {midi.division} out of range")

    out = bytearray(b'MThd' + pack_length(6) + pack_header(midi.format, len(midi.tracks), midi.division))
    for track in midi.tracks:
        body = write_track(track)
        out += b'MTrk' + pack_length(len(body)) + body
    return bytes(out)


def write_midi_file(midi: MidiFile, path):
    with open(path, 'wb') as f:
        f.write(write_midi(midi))
