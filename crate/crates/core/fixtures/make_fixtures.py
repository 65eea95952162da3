#!/usr/bin/env python3
"""Hand-assembles the classic-pcap fixtures used by the test suite.

Bytes are written with `struct` only, so the fixtures do not depend on the
Rust dissector they are used to check. Run from this directory:

    python3 make_fixtures.py

`dump_pcap.py` is the matching independent reader used to freeze expected
frame counts and flags.
"""
import struct

BASE_TS = 1_700_000_000


def mac(s):
    return bytes(int(x, 16) for x in s.split(":"))


def ip4(s):
    return bytes(int(x) for x in s.split("."))


def csum(data):
    if len(data) % 2:
        data += b"\0"
    total = sum(struct.unpack("!%dH" % (len(data) // 2), data))
    while total >> 16:
        total = (total & 0xFFFF) + (total >> 16)
    return (~total) & 0xFFFF


def ipv4(src, dst, proto, payload, ttl=64, ident=0):
    total = 20 + len(payload)
    hdr = struct.pack("!BBHHHBBH4s4s", 0x45, 0, total, ident, 0x4000, ttl, proto, 0, ip4(src), ip4(dst))
    hdr = hdr[:10] + struct.pack("!H", csum(hdr)) + hdr[12:]
    return hdr + payload


FLAGS = {"F": 0x01, "S": 0x02, "R": 0x04, "P": 0x08, "A": 0x10, "U": 0x20}


def tcp(sport, dport, flags, seq=0, ack=0, payload=b""):
    bits = 0
    for f in flags:
        bits |= FLAGS[f]
    return struct.pack("!HHIIBBHHH", sport, dport, seq, ack, 5 << 4, bits, 65535, 0, 0) + payload


def udp(sport, dport, payload):
    return struct.pack("!HHHH", sport, dport, 8 + len(payload), 0) + payload


def eth(src, dst, payload, ethertype=0x0800):
    return mac(dst) + mac(src) + struct.pack("!H", ethertype) + payload


def dns_name(name):
    out = b""
    for label in name.split("."):
        out += bytes([len(label)]) + label.encode()
    return out + b"\0"


def dns_query(txid, name, qtype=1):
    return struct.pack("!HHHHHH", txid, 0x0100, 1, 0, 0, 0) + dns_name(name) + struct.pack("!HH", qtype, 1)


def dns_response(txid, name, addr, qtype=1):
    q = dns_name(name) + struct.pack("!HH", qtype, 1)
    ans = struct.pack("!HHHIH", 0xC00C, 1, 1, 60, 4) + ip4(addr)
    return struct.pack("!HHHHHH", txid, 0x8180, 1, 1, 0, 0) + q + ans


def mqtt_connect(client_id):
    var = struct.pack("!H", 4) + b"MQTT" + bytes([4, 0x02]) + struct.pack("!H", 60)
    pl = struct.pack("!H", len(client_id)) + client_id.encode()
    body = var + pl
    return bytes([0x10, len(body)]) + body


def mqtt_publish(topic, message):
    body = struct.pack("!H", len(topic)) + topic.encode() + message.encode()
    return bytes([0x30, len(body)]) + body


def mqtt_subscribe(topic, packet_id=1):
    body = struct.pack("!H", packet_id) + struct.pack("!H", len(topic)) + topic.encode() + b"\0"
    return bytes([0x82, len(body)]) + body


def modbus(txid, unit, func, data):
    return struct.pack("!HHHB", txid, 0, len(data) + 2, unit) + bytes([func]) + data


def tls_client_hello(sni, random):
    sni_b = sni.encode()
    sni_entry = b"\0" + struct.pack("!H", len(sni_b)) + sni_b
    sni_list = struct.pack("!H", len(sni_entry)) + sni_entry
    ext = struct.pack("!HH", 0, len(sni_list)) + sni_list
    body = (
        struct.pack("!H", 0x0303)
        + random
        + b"\x20" + bytes(range(32))  # session id
        + struct.pack("!H", 2) + b"\x13\x01"
        + b"\x01\x00"
        + struct.pack("!H", len(ext)) + ext
    )
    hs = b"\x01" + struct.pack("!I", len(body))[1:] + body
    return b"\x16" + struct.pack("!HH", 0x0301, len(hs)) + hs


class Capture:
    def __init__(self):
        self.frames = []

    def add(self, ts, frame):
        self.frames.append((ts, frame))

    def write(self, path):
        with open(path, "wb") as f:
            f.write(struct.pack("<IHHiIII", 0xA1B2C3D4, 2, 4, 0, 0, 65535, 1))
            for ts, frame in self.frames:
                sec = int(ts)
                usec = int(round((ts - sec) * 1_000_000))
                f.write(struct.pack("<IIII", sec, usec, len(frame), len(frame)))
                f.write(frame)


CLIENT_MAC = "b8:27:eb:11:22:33"
SERVER_MAC = "00:1a:2b:3c:4d:5e"
GW_MAC = "3c:5a:b4:00:00:01"


def tcp_frame(cap, ts, src, dst, sport, dport, flags, seq=0, ack=0, payload=b"", smac=CLIENT_MAC, dmac=SERVER_MAC, ttl=64):
    cap.add(ts, eth(smac, dmac, ipv4(src, dst, 6, tcp(sport, dport, flags, seq, ack, payload), ttl=ttl)))


def udp_frame(cap, ts, src, dst, sport, dport, payload, smac=CLIENT_MAC, dmac=SERVER_MAC, ttl=64):
    cap.add(ts, eth(smac, dmac, ipv4(src, dst, 17, udp(sport, dport, payload), ttl=ttl)))


def handshake():
    cap = Capture()
    c, s = "10.0.0.2", "10.0.0.1"
    tcp_frame(cap, BASE_TS + 0.000, c, s, 49152, 80, "S", seq=1000)
    tcp_frame(cap, BASE_TS + 0.001, s, c, 80, 49152, "SA", seq=5000, ack=1001, smac=SERVER_MAC, dmac=CLIENT_MAC)
    tcp_frame(cap, BASE_TS + 0.002, c, s, 49152, 80, "A", seq=1001, ack=5001)
    return cap


def dns():
    cap = Capture()
    c, s = "10.0.0.2", "10.0.0.53"
    udp_frame(cap, BASE_TS + 0.000, c, s, 53000, 53, dns_query(0x1234, "sensor.local"))
    udp_frame(cap, BASE_TS + 0.004, s, c, 53, 53000, dns_response(0x1234, "sensor.local", "10.0.0.7"), smac=SERVER_MAC, dmac=CLIENT_MAC)
    return cap


def tls():
    cap = Capture()
    c, s = "10.0.0.2", "93.184.216.34"
    tcp_frame(cap, BASE_TS + 0.000, c, s, 50000, 443, "S", seq=1)
    tcp_frame(cap, BASE_TS + 0.020, s, c, 443, 50000, "SA", seq=900, ack=2, smac=GW_MAC, dmac=CLIENT_MAC, ttl=55)
    tcp_frame(cap, BASE_TS + 0.021, c, s, 50000, 443, "A", seq=2, ack=901, dmac=GW_MAC)
    hello = tls_client_hello("device.example.com", bytes((i * 7 + 3) & 0xFF for i in range(32)))
    tcp_frame(cap, BASE_TS + 0.022, c, s, 50000, 443, "PA", seq=2, ack=901, payload=hello, dmac=GW_MAC)
    return cap


def iot_mixed():
    """A small IoT capture with benign telemetry, a SYN flood and a port scan."""
    cap = Capture()
    t = float(BASE_TS)

    def tick(dt=0.001):
        nonlocal t
        t += dt
        return t

    # DNS lookup of the broker
    udp_frame(cap, tick(), "10.0.0.5", "10.0.0.53", 53001, 53, dns_query(0x0101, "broker.local"))
    udp_frame(cap, tick(), "10.0.0.53", "10.0.0.5", 53, 53001, dns_response(0x0101, "broker.local", "10.0.0.10"), smac=SERVER_MAC, dmac=CLIENT_MAC)

    # MQTT session: connect, subscribe, publish, graceful close
    c, s, cp = "10.0.0.5", "10.0.0.10", 40001
    tcp_frame(cap, tick(), c, s, cp, 1883, "S", seq=100)
    tcp_frame(cap, tick(), s, c, 1883, cp, "SA", seq=700, ack=101, smac=SERVER_MAC, dmac=CLIENT_MAC)
    tcp_frame(cap, tick(), c, s, cp, 1883, "A", seq=101, ack=701)
    tcp_frame(cap, tick(), c, s, cp, 1883, "PA", seq=101, ack=701, payload=mqtt_connect("thermo-01"))
    tcp_frame(cap, tick(), c, s, cp, 1883, "PA", seq=120, ack=701, payload=mqtt_subscribe("home/thermostat/setpoint"))
    tcp_frame(cap, tick(), c, s, cp, 1883, "PA", seq=150, ack=701, payload=mqtt_publish("home/sensor/temp", "21.5"))
    tcp_frame(cap, tick(), c, s, cp, 1883, "FA", seq=190, ack=701)
    tcp_frame(cap, tick(), s, c, 1883, cp, "FA", seq=701, ack=191, smac=SERVER_MAC, dmac=CLIENT_MAC)
    tcp_frame(cap, tick(), c, s, cp, 1883, "A", seq=191, ack=702)

    # Modbus read holding registers
    c, s, cp = "10.0.0.20", "10.0.0.30", 40100
    tcp_frame(cap, tick(), c, s, cp, 502, "S", seq=10)
    tcp_frame(cap, tick(), s, c, 502, cp, "SA", seq=90, ack=11, smac=SERVER_MAC, dmac=CLIENT_MAC)
    tcp_frame(cap, tick(), c, s, cp, 502, "A", seq=11, ack=91)
    tcp_frame(cap, tick(), c, s, cp, 502, "PA", seq=11, ack=91, payload=modbus(7, 1, 3, struct.pack("!HH", 0, 2)))
    tcp_frame(cap, tick(), s, c, 502, cp, "PA", seq=91, ack=23, payload=modbus(7, 1, 3, bytes([4, 0, 21, 0, 5])), smac=SERVER_MAC, dmac=CLIENT_MAC)

    # HTTP status poll
    c, s, cp = "10.0.0.5", "10.0.0.40", 40200
    tcp_frame(cap, tick(), c, s, cp, 80, "S", seq=300)
    tcp_frame(cap, tick(), s, c, 80, cp, "SA", seq=800, ack=301, smac=SERVER_MAC, dmac=CLIENT_MAC)
    tcp_frame(cap, tick(), c, s, cp, 80, "A", seq=301, ack=801)
    tcp_frame(cap, tick(), c, s, cp, 80, "PA", seq=301, ack=801, payload=b"GET /status HTTP/1.1\r\nHost: cam.local\r\n\r\n")
    tcp_frame(cap, tick(), s, c, 80, cp, "PA", seq=801, ack=343, payload=b"HTTP/1.1 200 OK\r\nContent-Length: 2\r\n\r\nok", smac=SERVER_MAC, dmac=CLIENT_MAC)

    # Midstream reset on a device API
    c, s, cp = "10.0.0.9", "10.0.0.1", 41000
    tcp_frame(cap, tick(), c, s, cp, 8080, "S", seq=1)
    tcp_frame(cap, tick(), s, c, 8080, cp, "SA", seq=50, ack=2, smac=SERVER_MAC, dmac=CLIENT_MAC)
    tcp_frame(cap, tick(), c, s, cp, 8080, "A", seq=2, ack=51)
    tcp_frame(cap, tick(), c, s, cp, 8080, "PA", seq=2, ack=51, payload=b"POST /api/cfg HTTP/1.1\r\nHost: hub.local\r\n\r\n")
    tcp_frame(cap, tick(), s, c, 8080, cp, "R", seq=51, smac=SERVER_MAC, dmac=CLIENT_MAC)

    # ICMP echo (ignored by flow assembly)
    echo = struct.pack("!BBHHH", 8, 0, 0, 1, 1) + b"ping"
    cap.add(tick(), eth(CLIENT_MAC, SERVER_MAC, ipv4("10.0.0.5", "10.0.0.1", 1, echo)))

    # SYN flood from a public host against the broker's HTTP port
    for i in range(150):
        tcp_frame(cap, tick(0.0005), "52.0.0.1", "10.0.0.10", 10000 + i, 80, "S", seq=i, smac=GW_MAC, ttl=48)

    # Port scan: SYN to 120 ports, closed ports answer RST+ACK
    for port in range(1, 121):
        tcp_frame(cap, tick(0.0005), "45.33.32.156", "10.0.0.40", 55555, port, "S", seq=9, smac=GW_MAC, ttl=50)
        tcp_frame(cap, tick(0.0001), "10.0.0.40", "45.33.32.156", port, 55555, "RA", ack=10, smac=SERVER_MAC, dmac=GW_MAC)
    return cap


if __name__ == "__main__":
    handshake().write("handshake.pcap")
    dns().write("dns_query.pcap")
    tls().write("tls_hello.pcap")
    iot_mixed().write("iot_mixed.pcap")
    with open("empty.pcap", "wb") as f:
        f.write(struct.pack("<IHHiIII", 0xA1B2C3D4, 2, 4, 0, 0, 65535, 1))
