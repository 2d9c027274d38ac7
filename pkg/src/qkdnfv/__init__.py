"""Time-shared QKD key generation and secure VNF image transfer over an
emulated SDN-controlled optical network."""

from .clock import SimClock, Throughput, WallClock
from .crypto import CipherMode, EncryptedPayload, decrypt, encrypt, request_key
from .link_model import (DEFAULT_MODEL, ChannelModel, DoubleExponential, attenuation_db, init_time_s,
                         key_bits_generated, qber, secret_key_rate_bps)
from .network import OpticalSwitch, Topology, compute_path, default_topology
from .orchestrator import Orchestrator, SlaveStack, TransferJob, VnfImage, receive_and_deploy
from .scheduler import KeyDemand, Schedule, build_schedule, execute_schedule
from .session import KeyBlock, KeyStore, QkdEndpoint, fetch_key_by_id, reserve_key, start_session

__version__ = "0.1.0"
