#!/usr/bin/env python3
"""Minimal independent pcap dumper used to freeze fixture expectations.

Prints frame count, one line per frame, and a brute-force flow grouping.
"""
import struct
import sys
from collections import OrderedDict

FLAG_NAMES = [(0x01, "FIN"), (0x02, "SYN"), (0x04, "RST"), (0x08, "PSH"), (0x10, "ACK"), (0x20, "URG")]


def frames(path):
    data = open(path, "rb").read()
    magic = struct.unpack("<I", data[:4])[0]
    endian = "<" if magic in (0xA1B2C3D4, 0xA1B23C4D) else ">"
    off = 24
    while off + 16 <= len(data):
        sec, usec, incl, orig = struct.unpack(endian + "IIII", data[off:off + 16])
        yield sec, usec, orig, data[off + 16: off + 16 + incl]
        off += 16 + incl


def main(path):
    rows = []
    for n, (sec, usec, orig, fr) in enumerate(frames(path), 1):
        etype = struct.unpack("!H", fr[12:14])[0]
        ip = fr[14:]
        if etype != 0x0800:
            rows.append((n, None))
            continue
        ihl = (ip[0] & 0xF) * 4
        proto = ip[9]
        src = ".".join(map(str, ip[12:16]))
        dst = ".".join(map(str, ip[16:20]))
        l4 = ip[ihl:]
        sport = dport = None
        flags = ""
        if proto in (6, 17):
            sport, dport = struct.unpack("!HH", l4[:4])
        if proto == 6:
            flags = ",".join(name for bit, name in FLAG_NAMES if l4[13] & bit)
        rows.append((n, (f"{sec}.{usec:06d}", orig, src, dst, proto, sport, dport, flags)))
    print("frames", len(rows))
    flows = OrderedDict()
    for n, r in rows:
        print(n, r)
        if r and r[4] in (6, 17):
            a, b = (r[2], r[5]), (r[3], r[6])
            key = (r[4],) + tuple(sorted([a, b], key=lambda e: (tuple(int(x) for x in e[0].split(".")), e[1])))
            f = flows.setdefault(key, [0, 0])
            f[0] += 1
            f[1] += r[1]
    print("flows", len(flows))
    for k, v in flows.items():
        print(k, "pkts", v[0], "bytes", v[1])


if __name__ == "__main__":
    main(sys.argv[1])
