import json

import pytest

from iiotsim import attacks, fieldbus, harness

from conftest import small_plan

ATTACKER_MAC = "00:0c:29:5b:a2:99"
ROUTER_MAC = "00:0c:29:6e:a7:ca"

LAN_A = {"192.168.10.150", "192.168.10.1", "192.168.10.20", "192.168.10.30",
         "192.168.10.151"}
LAN_W = {"192.168.20.1", "192.168.20.10", "192.168.20.25"}


def routed_gw_frames(result):
    """Frames the gateway sent toward the router as next hop."""
    out = []
    for f in result.sim.capture:
        if f.sender != "edge-gw" or f.l4 == "ARP" or f.segment != "lan-a":
            continue
        if f.dst_ip in LAN_A or f.dst_ip in LAN_W:
            continue
        out.append(f)
    return out


def spoof_attack(t_start=20.2, duration=30.0, kind="arp_spoof", scale=None):
    a = {"id": "atk", "kind": kind, "attacker": "attacker",
         "victim_a": "edge-gw", "victim_b": "router",
         "t_start_s": t_start, "duration_s": duration}
    if scale is not None:
        a["scale"] = scale
    return a


class TestArpSpoof:
    def test_all_routed_frames_carry_attacker_mac_in_window(self, tmp_path):
        plan = small_plan(duration_s=70.0, attacks=[spoof_attack()])
        result = harness.run(plan, str(tmp_path))
        window = result.windows[0]
        lo, hi = window.effect
        inside = [f for f in routed_gw_frames(result) if lo <= f.ts_us <= hi]
        outside = [f for f in routed_gw_frames(result)
                   if not (lo <= f.ts_us <= hi)]
        assert inside
        assert all(f.dst_mac == ATTACKER_MAC for f in inside)
        assert outside
        assert all(f.dst_mac == ROUTER_MAC for f in outside)

    def test_cache_reconverges_after_window(self):
        plan = small_plan(duration_s=70.0, attacks=[spoof_attack()])
        build = harness.Build(plan)
        build.run()
        assert build.gw_host.arp_cache["192.168.10.1"][0] == ROUTER_MAC

    def test_cross_segment_victims_rejected(self):
        plan = small_plan(duration_s=30.0)
        build = harness.Build(plan)
        with pytest.raises(ValueError):
            attacks.ArpSpoof(build.sim, build.hosts["attacker"],
                             build.hosts["edge-gw"], build.hosts["cloud"],
                             1_000_000, 5_000_000)

    def test_window_ground_truth_recorded(self, tmp_path):
        plan = small_plan(duration_s=70.0, attacks=[spoof_attack()])
        result = harness.run(plan, str(tmp_path))
        w = result.windows[0]
        assert w.kind == "arp_spoof"
        assert w.attacker == "attacker"
        assert set(w.victims) == {"edge-gw", "router"}
        assert w.t_start_us <= w.effect[0] < w.effect[1] <= w.t_end_us


def forwarded_vs_cloud(result):
    fw = result.gateway.forwarded
    cl = result.broker.historian.rows
    assert len(fw) == len(cl)
    return list(zip(fw, cl))


class TestTamper:
    def test_scale_two_diverges_only_in_window(self, tmp_path):
        plan = small_plan(duration_s=90.0,
                          attacks=[spoof_attack(kind="tamper", scale=2.0,
                                                t_start=20.2, duration=40.0)])
        result = harness.run(plan, str(tmp_path))
        lo, hi = result.windows[0].effect
        n_in = 0
        for (ts, topic, body), row in forwarded_vs_cloud(result):
            edge_val = json.loads(body)["Measurement"]
            if lo <= ts <= hi:
                assert row.measurement == 2.0 * edge_val
                n_in += 1
            else:
                assert row.measurement == edge_val
        assert n_in > 0

    def test_null_transform_keeps_historians_identical(self, tmp_path):
        plan = small_plan(duration_s=90.0,
                          attacks=[spoof_attack(kind="tamper", scale=1.0,
                                                t_start=20.2, duration=40.0)])
        result = harness.run(plan, str(tmp_path))
        for (ts, topic, body), row in forwarded_vs_cloud(result):
            assert row.measurement == json.loads(body)["Measurement"]

    def test_non_mqtt_frames_pass_unmodified(self):
        transform = attacks.scale_measurement_transform(2.0)
        raw = b'{"method": "GET", "path": "/api/snapshot"}'
        assert transform(raw) == raw
        assert transform(b"\x01\x02") == b"\x01\x02"

    def test_sys_topics_not_rewritten(self):
        transform = attacks.scale_measurement_transform(2.0)
        pkt = json.dumps({"type": "PUBLISH", "qos": 0,
                          "topic": "$SYS/broker/bytes/sent", "mid": 0,
                          "payload": "123"}).encode()
        assert transform(pkt) == pkt


class TestLogTamper:
    def exploited_build(self, duration=120.0):
        plan = small_plan(duration_s=duration, attacks=[
            {"id": "x", "kind": "exploit", "attacker": "attacker",
             "target": "router", "credentials": ["admin", "default"],
             "t_start_s": 5.0, "listener_port": 4444, "command_gap_s": 5.0,
             "sessions": [[10.0, 20.0]]},
        ])
        build = harness.Build(plan)
        build.run()
        return build

    def test_requires_foothold(self):
        plan = small_plan(duration_s=20.0)
        build = harness.Build(plan)
        build.run()
        with pytest.raises(PermissionError):
            attacks.log_tamper(build.sim, build.hosts["attacker"],
                               build.router, build.webgui, "shell")

    def test_deletes_only_matches_and_truth_keeps_all(self):
        build = self.exploited_build()
        before = list(build.router.syslog)
        matches = [e for e in before if "shell" in e[1]]
        assert matches
        window = attacks.log_tamper(build.sim, build.hosts["attacker"],
                                    build.router, build.webgui, "shell")
        assert window.deleted == len(matches)
        assert all("shell" not in e[1] for e in build.router.syslog)
        truth = build.sim.syslog_truth["router"]
        assert [e for e in truth if "shell" in e[1]] == matches

    def test_empty_predicate_is_noop(self):
        build = self.exploited_build()
        before = list(build.router.syslog)
        window = attacks.log_tamper(build.sim, build.hosts["attacker"],
                                    build.router, build.webgui, "")
        assert window.deleted == 0
        assert build.router.syslog == before

    def test_syslog_row_count_delta_matches_deletions(self):
        from iiotsim.hunt import parse_syslog
        build = self.exploited_build()
        fmt = lambda entries: [f"2019-01-01T00:00:00.000Z {t}"
                               for _, t in entries]
        before, _ = parse_syslog(fmt(build.router.syslog))
        window = attacks.log_tamper(build.sim, build.hosts["attacker"],
                                    build.router, build.webgui, "shell")
        after, _ = parse_syslog(fmt(build.router.syslog))
        assert len(before) - len(after) == window.deleted


class TestI2cSniff:
    def test_reference_line_and_extraction(self):
        plan = small_plan(duration_s=30.0, attacks=[
            {"id": "s", "kind": "i2c_sniff", "t_start_s": 0.0,
             "duration_s": 30.0}])
        plan["plant"]["sensors"]["mpl-temp"].update(init=23.9375, walk_step=0.0)
        plan["plant"]["sensors"]["mpl-press"].update(init=94.73775,
                                                     walk_step=0.0)
        build = harness.Build(plan)
        build.run()
        sniffer = build.attack_objs["s"]
        assert "[C0+01+[C1+5C+84+70+17+F0+00-]" in sniffer.lines
        values = sniffer.extracted_values()
        assert values
        assert all(v == (23.9375, 94.73775) for v in values)

    def test_every_sniffed_line_reparses(self):
        plan = small_plan(duration_s=30.0, attacks=[
            {"id": "s", "kind": "i2c_sniff", "t_start_s": 0.0,
             "duration_s": 30.0}])
        build = harness.Build(plan)
        build.run()
        for line in build.attack_objs["s"].lines:
            assert fieldbus.TRACE_RE.match(line)
            fieldbus.parse_trace(line)

    def test_empty_window(self):
        plan = small_plan(duration_s=10.0, attacks=[
            {"id": "s", "kind": "i2c_sniff", "t_start_s": 9.99,
             "duration_s": 0.001}])
        build = harness.Build(plan)
        build.run()
        assert build.attack_objs["s"].lines == []


class TestModbusFlood:
    def flood_plan(self, rate=400, duration=5.0):
        return small_plan(duration_s=40.0, attacks=[
            {"id": "dos", "kind": "modbus_dos", "attacker": "attacker",
             "target": "plc", "t_start_s": 10.1, "duration_s": duration,
             "rate_per_s": rate, "addr_lo": 0, "addr_hi": 199,
             "reqs_per_conn": 10}])

    def test_request_volume(self, tmp_path):
        result = harness.run(self.flood_plan(), str(tmp_path))
        atk = result.attack_objs["dos"]
        assert atk.requests_sent >= 0.9 * 400 * 5
        lo, hi = result.windows[0].t_start_us, result.windows[0].t_end_us
        captured = [f for f in result.sim.capture
                    if f.sender == "attacker" and f.proto_tag == "MODBUS"
                    and f.payload and lo <= f.ts_us <= hi]
        assert len(captured) >= 0.9 * 400 * 5

    def test_zero_rate_rejected(self):
        plan = self.flood_plan(rate=0)
        with pytest.raises(Exception):
            harness.Build(plan)

    def test_legit_read_succeeds_during_flood(self, tmp_path):
        result = harness.run(self.flood_plan(), str(tmp_path))
        lo, hi = result.windows[0].t_start_us, result.windows[0].t_end_us
        plc_rows = [r for r in result.gateway.historian.rows
                    if r.device_id == "Slave 2" and lo <= r.ts_us <= hi]
        assert plc_rows

    def test_scan_jitter_bounded(self, tmp_path):
        result = harness.run(self.flood_plan(), str(tmp_path))
        scans = [ts for ts, _, _ in result.plc.scan_log]
        period = result.plc.scan_period_us
        devs = [abs((scans[i + 1] - scans[i]) - period) / period
                for i in range(len(scans) - 1)]
        assert max(devs) <= 0.10 + 1e-9


class TestRogueSubscriber:
    def rogue_plan(self, filters, acl=False):
        plan = small_plan(duration_s=60.0, attacks=[
            {"id": "r", "kind": "rogue_subscriber", "attacker": "attacker",
             "broker_host": "cloud", "filters": filters, "t_start_s": 5.1,
             "duration_s": 50.0, "cycle_s": 4.0}])
        if acl:
            plan["broker"]["acl_enabled"] = True
            plan["broker"]["allowlist"] = ["192.168.10.150"]
        return plan

    def test_wildcards_capture_sys_and_telemetry(self, tmp_path):
        result = harness.run(self.rogue_plan(["#", "$SYS/#"]),
                             str(tmp_path))
        transcript = result.attack_objs["r"].transcript
        assert any(line.startswith("$SYS/broker/version: ")
                   for line in transcript)
        plc_lines = [l for l in transcript if l.startswith("station/PLC: ")]
        assert plc_lines
        body = json.loads(plc_lines[0].split(": ", 1)[1])
        assert body["Device Type"] == "PLC MODBUS"

    def test_single_topic_filter(self, tmp_path):
        result = harness.run(self.rogue_plan(["station/PLC"]),
                             str(tmp_path))
        transcript = result.attack_objs["r"].transcript
        assert transcript
        assert all(l.startswith("station/PLC: ") for l in transcript)

    def test_acl_refuses_connection(self, tmp_path):
        result = harness.run(self.rogue_plan(["#"], acl=True),
                             str(tmp_path))
        atk = result.attack_objs["r"]
        assert atk.refused
        assert atk.transcript == []


class TestPortScan:
    def test_router_scan_reports_https(self, tmp_path):
        plan = small_plan(duration_s=20.0, attacks=[
            {"id": "scan", "kind": "recon", "attacker": "attacker",
             "target": "router", "t_start_s": 5.0,
             "ports": [22, 443, 9999]}])
        result = harness.run(plan, str(tmp_path))
        report = result.attack_objs["scan"].report
        assert report["open_ports"] == {443: "https"}
        assert report["os"] == "router-fw 2.4 (unix)"
        probes = [f for f in result.sim.capture if f.proto_tag == "SCAN"]
        assert probes   # recon is visible in the capture

    def test_all_closed_host(self, tmp_path):
        plan = small_plan(duration_s=20.0, attacks=[
            {"id": "scan", "kind": "recon", "attacker": "attacker",
             "target": "pc", "t_start_s": 5.0, "ports": [22, 80, 443]}])
        result = harness.run(plan, str(tmp_path))
        assert result.attack_objs["scan"].report["open_ports"] == {}


class TestExploit:
    def exploit_plan(self, credentials=("admin", "default"), vulnerable=True,
                     sessions=((10.0, 20.0), (31.0, 8.5))):
        plan = small_plan(duration_s=60.0, attacks=[
            {"id": "x", "kind": "exploit", "attacker": "attacker",
             "target": "router", "credentials": list(credentials),
             "t_start_s": 5.0, "listener_port": 4444, "command_gap_s": 5.0,
             "sessions": [list(s) for s in sessions]}])
        for h in plan["hosts"]:
            if h["id"] == "router":
                h["webgui"]["vulnerable"] = vulnerable
        return plan

    def test_sessions_originate_from_victim(self, tmp_path):
        result = harness.run(self.exploit_plan(), str(tmp_path))
        convs = [c for c in result.conversations if c.resp_port == 4444]
        assert len(convs) == 2
        assert all(c.orig_ip == "192.168.10.1" for c in convs)
        assert all(c.resp_ip == "192.168.10.151" for c in convs)

    def test_session_durations_exact(self, tmp_path):
        result = harness.run(self.exploit_plan(), str(tmp_path))
        convs = sorted((c for c in result.conversations
                        if c.resp_port == 4444),
                       key=lambda c: c.ts_first_us)
        assert [c.duration_s for c in convs] == [20.0, 8.5]

    def test_commands_and_root_marker(self, tmp_path):
        result = harness.run(self.exploit_plan(), str(tmp_path))
        atk = result.attack_objs["x"]
        assert atk.succeeded
        assert atk.sessions[0].commands
        assert all("uid=0(root)" in out for out in atk.sessions[0].outputs)
        assert any("reverse shell" in text for _, text in
                   result.sim.hosts["router"].syslog)

    def test_wrong_credentials_fail(self, tmp_path):
        result = harness.run(self.exploit_plan(credentials=("admin", "wrong")),
                             str(tmp_path))
        atk = result.attack_objs["x"]
        assert not atk.succeeded
        assert atk.failure == "bad credentials"
        assert not [c for c in result.conversations if c.resp_port == 4444]

    def test_not_vulnerable_fails(self, tmp_path):
        result = harness.run(self.exploit_plan(vulnerable=False),
                             str(tmp_path))
        atk = result.attack_objs["x"]
        assert not atk.succeeded
        assert atk.failure == "target not vulnerable"
        assert not [c for c in result.conversations if c.resp_port == 4444]
