"""Spin a real bank service on an ephemeral port for end-to-end tests."""

import threading
import time

import uvicorn

from vcpay.bank import BankConfig, BankService, MockPaymentAdapter
from vcpay.bank.api import create_app


class LiveBank:
    def __init__(self, tmp_path, *, sync_jobs=True, batch_threshold=100):
        tmp_path.mkdir(parents=True, exist_ok=True)
        self.config = BankConfig(
            db_path=str(tmp_path / "live.sqlite3"),
            data_dir=str(tmp_path / "live-data"),
            sync_jobs=sync_jobs,
            batch_threshold=batch_threshold,
        )
        self.service = BankService(self.config, MockPaymentAdapter())
        if not sync_jobs:
            self.service.start_worker()
        app = create_app(self.service)
        self._server = uvicorn.Server(
            uvicorn.Config(app, host="127.0.0.1", port=0, log_level="error")
        )
        self._thread = threading.Thread(target=self._server.run, daemon=True)
        self._thread.start()
        deadline = time.time() + 10
        while not self._server.started:
            if time.time() > deadline:
                raise RuntimeError("bank server did not start")
            time.sleep(0.01)
        sock = self._server.servers[0].sockets[0]
        self.url = f"http://127.0.0.1:{sock.getsockname()[1]}"

    def stop(self):
        self._server.should_exit = True
        self._thread.join(timeout=10)
        self.service.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.stop()
