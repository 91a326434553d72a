"""Auxiliary victim-side services: the mail host and the router web admin."""

import json


class MailService:
    """Minimal mail-like responder: every client line gets one 250 OK."""

    def __init__(self, sim, service_time_us: int = 12_180):
        self.sim = sim
        self.service_time_us = service_time_us
        self.messages: list = []     # (ts_us, text)

    def on_open(self, stream):
        pass

    def on_data(self, stream, data: bytes):
        text = data.decode(errors="replace")
        if text.startswith("MSG "):
            self.messages.append((self.sim.now_us, text[4:]))
        def reply():
            if stream.state == "established":
                stream.write("server", b"250 OK")
        self.sim.schedule(self.service_time_us, reply)


class WebGuiService:
    """Router web admin on 443: page fetches, credential login, and the
    graph-upload path that arms a shell foothold on a vulnerable host."""

    def __init__(self, sim, host, credentials: tuple = ("admin", "admin"),
                 vulnerable: bool = False, service_time_us: int = 20_000):
        self.sim = sim
        self.host = host
        self.credentials = credentials
        self.vulnerable = vulnerable
        self.service_time_us = service_time_us
        self.footholds: set = set()       # attacker host ids with shell access
        self._authed_streams: set = set()
        self._stream_seq = 0

    def on_open(self, stream):
        self._stream_seq += 1
        stream._webgui_key = self._stream_seq

    def on_data(self, stream, data: bytes):
        try:
            request = json.loads(data.decode())
        except ValueError:
            request = {}
        action = request.get("action", "get")
        if action == "get":
            body = {"status": 200, "page": request.get("path", "/"),
                    "server": "webgui"}
        elif action == "login":
            if (request.get("user"), request.get("password")) == self.credentials:
                self._authed_streams.add(getattr(stream, "_webgui_key", -1))
                body = {"status": 200, "auth": "ok"}
                self.sim.log_syslog(self.host,
                                    f"webgui: login {request.get('user')} "
                                    f"from {stream.client_ip}")
            else:
                body = {"status": 401, "auth": "denied"}
                self.sim.log_syslog(self.host,
                                    f"webgui: failed login from {stream.client_ip}")
        elif action == "inject":
            authed = getattr(stream, "_webgui_key", -1) in self._authed_streams
            if authed and self.vulnerable:
                self.footholds.add(request.get("attacker", stream.client_ip))
                body = {"status": 200, "upload": "ok"}
                self.sim.log_syslog(self.host,
                                    "webgui: graph payload uploaded from "
                                    f"{stream.client_ip}")
            else:
                body = {"status": 403, "upload": "rejected"}
        else:
            body = {"status": 400}
        raw = json.dumps(body).encode()
        def reply():
            if stream.state == "established":
                stream.write("server", raw)
        self.sim.schedule(self.service_time_us, reply)
