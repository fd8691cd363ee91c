from dataclasses import dataclass

import pytest

from votegrid import audit, delivery, election, store


class FakeClock:
    """Virtual wall clock so TTL and lockout behaviour is test-controlled."""

    def __init__(self, start: float = 1_700_000_000.0):
        self.now = float(start)

    def __call__(self) -> float:
        return self.now

    def advance(self, seconds: float) -> None:
        self.now += seconds


OFFICES = ("President", "Vice President", "Secretary")


@dataclass
class Harness:
    service: election.ElectionService
    datastore: store.Datastore
    log: audit.AuditLog
    email: delivery.MemoryTransport
    sms: delivery.MemoryTransport
    clock: FakeClock
    admin_password: str = "admin-pass-1"

    def register(self, employee_id: str, **overrides) -> store.VoterRecord:
        fields = {
            "employee_id": employee_id,
            "password": f"pw-{employee_id}",
            "lastname": "Reyes",
            "firstname": "Sam",
            "college": "Engineering",
            "position": "Professor",
            "contact_number": f"+63917{abs(hash(employee_id)) % 10_000_000:07d}",
            "email": f"{employee_id}@example.test",
        }
        fields.update(overrides)
        return self.service.register_voter(**fields)

    def admin_session(self) -> election.Session:
        return self.service.authenticate_password("admin-1", self.admin_password)

    def approve(self, employee_id: str) -> store.VoterRecord:
        return self.service.approve_voter(self.admin_session(), employee_id, "approve")

    def login(self, employee_id: str) -> election.Session:
        return self.service.authenticate_password(employee_id, f"pw-{employee_id}")

    def sms_code(self, employee_id: str) -> str:
        """Read the latest out-of-band SMS and reassemble the 6-char code."""
        record = self.datastore.get_voter(employee_id)
        messages = self.sms.for_recipient(record.contact_number)
        body = messages[-1].body
        assert body.startswith("INFO: ")
        return body[len("INFO: "):].replace(" ", "")

    def verified_session(self, employee_id: str) -> election.Session:
        session = self.login(employee_id)
        self.service.request_otp(session, employee_id)
        return self.service.confirm_otp(session, self.sms_code(employee_id))

    def ready_voter(self, employee_id: str) -> election.Session:
        self.register(employee_id)
        self.approve(employee_id)
        return self.verified_session(employee_id)


def build_harness(tmp_path, offices=OFFICES, **service_overrides) -> Harness:
    clock = service_overrides.pop("clock", FakeClock())
    email = delivery.MemoryTransport()
    sms = delivery.MemoryTransport()
    log = audit.AuditLog(tmp_path / "audit.log", clock=clock, fsync=False)
    dispatcher = delivery.Dispatcher(email_transport=email, sms_transport=sms,
                                     audit_log=log, sleep=lambda s: None)
    datastore = store.Datastore(tmp_path / "votegrid.db")
    service = election.ElectionService(datastore, log, dispatcher,
                                       offices=offices, clock=clock,
                                       **service_overrides)
    harness = Harness(service=service, datastore=datastore, log=log,
                      email=email, sms=sms, clock=clock)
    service.bootstrap_admin("admin-1", harness.admin_password,
                            email="admin@example.test")
    return harness


@pytest.fixture
def harness(tmp_path) -> Harness:
    return build_harness(tmp_path)


@pytest.fixture
def open_harness(tmp_path) -> Harness:
    h = build_harness(tmp_path)
    h.service.add_candidate("Ada Alon", "President", candidate_id="pres-a")
    h.service.add_candidate("Ben Bas", "President", candidate_id="pres-b")
    h.service.add_candidate("Cora Cruz", "Vice President", candidate_id="vp-c")
    h.service.add_candidate("Dan Diaz", "Vice President", candidate_id="vp-d")
    h.service.add_candidate("Eva Enriquez", "Secretary", candidate_id="sec-e")
    h.service.open_election(h.admin_session())
    return h
