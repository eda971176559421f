"""Packet-level dumbbell simulation with DropTail queues."""

from aimdlab.packet_sim.events import Event, EventKind, EventQueue
from aimdlab.packet_sim.packet import Packet, PacketKind
from aimdlab.packet_sim.queue import DropTailQueue, EnqueueResult, enqueue_droptail, serialize_delay
from aimdlab.packet_sim.simulator import DeliveryRecord, FlowStats, Simulation, Trace, run_scenario
from aimdlab.packet_sim.topology import Channel, Dumbbell, LinkSpec, Node, build_dumbbell
from aimdlab.packet_sim.transport import IntervalSet, TransportReceiver, TransportSender

__all__ = [
    "Channel",
    "DeliveryRecord",
    "DropTailQueue",
    "Dumbbell",
    "EnqueueResult",
    "Event",
    "EventKind",
    "EventQueue",
    "FlowStats",
    "IntervalSet",
    "LinkSpec",
    "Node",
    "Packet",
    "PacketKind",
    "Simulation",
    "Trace",
    "TransportReceiver",
    "TransportSender",
    "build_dumbbell",
    "enqueue_droptail",
    "run_scenario",
    "serialize_delay",
]
