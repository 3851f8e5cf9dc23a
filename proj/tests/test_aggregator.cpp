/*
Copyright 2026 The lagsim Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <random>
#include <set>
#include <vector>

#include "doctest.h"
#include "lagsim/aggregator.hpp"
#include "lagsim/errors.hpp"

using namespace lagsim;

namespace {

MacAddress tail_mac(std::uint8_t tail) {
    return MacAddress{{0, 0, 0, 0, 0, tail}};
}

Frame make_frame(std::uint8_t src_tail, std::uint8_t dst_tail, std::uint64_t seq = 0) {
    Frame f;
    f.src = tail_mac(src_tail);
    f.dst = tail_mac(dst_tail);
    f.seq = seq;
    f.payload_len = 64;
    f.kind = FrameKind::EchoRequest;
    return f;
}

PortIdentity port(std::uint16_t number) {
    return PortIdentity{0x0080, number};
}

Frame conv_frame(const ConversationId& conv) {
    Frame f;
    f.src = conv.src;
    f.dst = conv.dst;
    return f;
}

Aggregator two_port_agg() {
    Aggregator agg;
    agg.mac = tail_mac(0x11);
    agg = attach_port(std::move(agg), port(1));
    agg = attach_port(std::move(agg), port(2));
    agg.distributing_ports = agg.attached_ports;
    return agg;
}

MacAddress random_mac(std::mt19937_64& rng) {
    MacAddress m;
    for (auto& o : m.octets) {
        o = static_cast<std::uint8_t>(rng());
    }
    return m;
}

}  // namespace

TEST_CASE("fold_mac XORs all six octets") {
    CHECK(fold_mac(tail_mac(0x11)) == 0x11);
    CHECK(fold_mac(MacAddress{}) == 0x00);
    CHECK(fold_mac(MacAddress{{0x01, 0x80, 0xc2, 0x00, 0x00, 0x02}}) == 0x41);
    CHECK(fold_mac(MacAddress{{0xff, 0xff, 0xff, 0xff, 0xff, 0xff}}) == 0x00);
}

TEST_CASE("conversation hash XORs the folds and ignores direction") {
    ConversationId ab{tail_mac(0x11), tail_mac(0x22)};
    ConversationId ba{tail_mac(0x22), tail_mac(0x11)};
    CHECK(conversation_hash(ab) == 0x33);
    CHECK(conversation_hash(ab) == conversation_hash(ba));
}

TEST_CASE("hash_select reduces the fold XOR modulo the port count") {
    // fold(src)=0x11, fold(dst)=0x22, h=0x33=51, 51 mod 2 = 1: second port.
    Frame f = make_frame(0x11, 0x22);
    std::vector<PortIdentity> ports{port(1), port(2)};
    CHECK(hash_select(f, ports) == port(2));
}

TEST_CASE("src equal to dst hashes to zero and picks the first port") {
    Frame f = make_frame(0x5a, 0x5a);
    CHECK(hash_select(f, {port(3), port(9)}) == port(3));
}

TEST_CASE("a single port takes every conversation") {
    std::mt19937_64 rng(21);
    for (int i = 0; i < 100; ++i) {
        Frame f;
        f.src = random_mac(rng);
        f.dst = random_mac(rng);
        CHECK(hash_select(f, {port(4)}) == port(4));
    }
}

TEST_CASE("hash_select sorts the port list before indexing") {
    Frame f = make_frame(0x11, 0x22);  // index 1 of the sorted list
    CHECK(hash_select(f, {port(2), port(1)}) == port(2));
    CHECK(hash_select(f, {port(7), port(3), port(5)}) == hash_select(f, {port(3), port(5), port(7)}));
}

TEST_CASE("hash_select over no ports refuses") {
    CHECK_THROWS_AS(hash_select(make_frame(1, 2), {}), NoDistributingPortError);
    CHECK_THROWS_AS(distribute(make_frame(1, 2), Aggregator{}), NoDistributingPortError);
}

TEST_CASE("hash_select_port agrees with hash_select on bare numbers") {
    std::mt19937_64 rng(22);
    for (int i = 0; i < 500; ++i) {
        Frame f;
        f.src = random_mac(rng);
        f.dst = random_mac(rng);
        std::vector<PortIdentity> ports;
        std::vector<std::uint16_t> numbers;
        int n = 1 + static_cast<int>(rng() % 8);
        for (int p = 1; p <= n; ++p) {
            ports.push_back(port(static_cast<std::uint16_t>(p)));
            numbers.push_back(static_cast<std::uint16_t>(p));
        }
        CHECK(hash_select(f, ports).number == hash_select_port(f.conversation(), numbers));
    }
}

TEST_CASE("canonical two-link assignment puts h2 and h4 together, h3 alone") {
    Aggregator agg = two_port_agg();
    PortIdentity p2 = distribute(make_frame(0x22, 0x11), agg).port;
    PortIdentity p3 = distribute(make_frame(0x33, 0x11), agg).port;
    PortIdentity p4 = distribute(make_frame(0x44, 0x11), agg).port;
    CHECK(p2 == p4);
    CHECK(p2 != p3);
}

TEST_CASE("canonical eight-host assignment spreads over all eight links") {
    Aggregator agg;
    agg.mac = tail_mac(0x11);
    for (std::uint16_t i = 1; i <= 8; ++i) {
        agg = attach_port(std::move(agg), port(i));
    }
    agg.distributing_ports = agg.attached_ports;

    std::set<std::uint16_t> used;
    for (int h = 2; h <= 9; ++h) {
        auto tail = static_cast<std::uint8_t>(h * 0x11);
        used.insert(distribute(make_frame(tail, 0x11), agg).port.number);
    }
    CHECK(used.size() == 8);
}

TEST_CASE("one conversation sticks to one port while the set is stable") {
    Aggregator agg = two_port_agg();
    PortIdentity first = distribute(make_frame(0x22, 0x11, 0), agg).port;
    for (std::uint64_t seq = 1; seq < 1000; ++seq) {
        CHECK(distribute(make_frame(0x22, 0x11, seq), agg).port == first);
    }
}

TEST_CASE("attach keeps ports sorted and detach trims the distributing set") {
    Aggregator agg;
    agg = attach_port(std::move(agg), port(5));
    agg = attach_port(std::move(agg), port(2));
    agg = attach_port(std::move(agg), port(9));
    agg = attach_port(std::move(agg), port(2));  // re-attach is idempotent
    REQUIRE(agg.attached_ports.size() == 3);
    CHECK(agg.attached_ports[0] == port(2));
    CHECK(agg.attached_ports[1] == port(5));
    CHECK(agg.attached_ports[2] == port(9));
    CHECK(agg.is_attached(port(5)));
    CHECK(!agg.is_attached(port(4)));

    agg.distributing_ports = agg.attached_ports;
    agg = detach_port(std::move(agg), port(5));
    CHECK(!agg.is_attached(port(5)));
    CHECK(agg.attached_ports.size() == 2);
    CHECK(agg.distributing_ports.size() == 2);
    for (const auto& p : agg.distributing_ports) {
        CHECK(p != port(5));
    }
}

TEST_CASE("collector passes an in-order stream through unflagged") {
    CollectorState col;
    for (std::uint64_t seq : {1, 2, 3}) {
        CollectVerdict v = col.collect(make_frame(0x22, 0x11, seq), port(1));
        CHECK(!v.duplicate);
        CHECK(!v.reordered);
    }
    CHECK(col.delivered() == 3);
    CHECK(col.duplicates() == 0);
    CHECK(col.reorderings() == 0);
    CHECK(col.duplicate_conversations().empty());
}

TEST_CASE("a replayed seq is flagged duplicate and not delivered again") {
    CollectorState col;
    col.collect(make_frame(0x22, 0x11, 5), port(1));
    CollectVerdict v = col.collect(make_frame(0x22, 0x11, 5), port(2));
    CHECK(v.duplicate);
    CHECK(col.duplicates() == 1);
    CHECK(col.delivered() == 1);
    auto convs = col.duplicate_conversations();
    REQUIRE(convs.size() == 1);
    CHECK(convs[0] == make_frame(0x22, 0x11).conversation());
}

TEST_CASE("a seq below the delivered maximum is flagged reordered") {
    CollectorState col;
    col.collect(make_frame(0x22, 0x11, 7), port(1));
    CollectVerdict v = col.collect(make_frame(0x22, 0x11, 6), port(2));
    CHECK(v.reordered);
    CHECK(!v.duplicate);
    CHECK(col.reorderings() == 1);
    CHECK(col.delivered() == 2);
}

TEST_CASE("duplicates below the contiguous prefix are still caught") {
    CollectorState col;
    for (std::uint64_t seq = 0; seq < 10; ++seq) {
        col.collect(make_frame(0x22, 0x11, seq), port(1));
    }
    CHECK(col.collect(make_frame(0x22, 0x11, 4), port(1)).duplicate);
    CHECK(col.collect(make_frame(0x22, 0x11, 0), port(1)).duplicate);
    CHECK(col.duplicates() == 2);
}

TEST_CASE("late gap fillers count as reordered, not duplicate") {
    CollectorState col;
    for (std::uint64_t seq : {0, 1, 2, 5}) {
        col.collect(make_frame(0x22, 0x11, seq), port(1));
    }
    CollectVerdict v3 = col.collect(make_frame(0x22, 0x11, 3), port(1));
    CHECK(v3.reordered);
    CHECK(!v3.duplicate);
    CollectVerdict v4 = col.collect(make_frame(0x22, 0x11, 4), port(1));
    CHECK(v4.reordered);
    // The prefix is contiguous through 5 again, so replaying 5 is duplicate.
    CHECK(col.collect(make_frame(0x22, 0x11, 5), port(1)).duplicate);
}

TEST_CASE("conversations are tracked independently") {
    CollectorState col;
    col.collect(make_frame(0x22, 0x11, 9), port(1));
    CollectVerdict v = col.collect(make_frame(0x33, 0x11, 0), port(1));
    CHECK(!v.reordered);  // different conversation, its own seq space
    CHECK(!v.duplicate);
}

TEST_CASE("port state change reports exactly the conversations whose hash moved") {
    std::mt19937_64 rng(0xa66);
    Aggregator agg;
    agg.mac = tail_mac(0x11);
    for (std::uint16_t i = 1; i <= 4; ++i) {
        agg = attach_port(std::move(agg), port(i));
    }
    agg.distributing_ports = agg.attached_ports;

    std::vector<ConversationId> observed;
    for (int i = 0; i < 300; ++i) {
        observed.push_back(ConversationId{random_mac(rng), random_mac(rng)});
    }

    auto old_set = agg.distributing_ports;
    PortChangeResult r = on_port_state_change(agg, port(2), false, observed, SimTime{});
    auto new_set = r.agg.distributing_ports;
    REQUIRE(new_set.size() == 3);

    std::set<std::pair<MacAddress, MacAddress>> expected_moves;
    for (const auto& c : observed) {
        if (!(hash_select(conv_frame(c), old_set) == hash_select(conv_frame(c), new_set))) {
            expected_moves.insert({c.src, c.dst});
        }
    }
    std::set<std::pair<MacAddress, MacAddress>> reported;
    for (const RemapEntry& e : r.remaps) {
        reported.insert({e.conversation.src, e.conversation.dst});
        CHECK(e.old_port == hash_select(conv_frame(e.conversation), old_set));
        CHECK(e.new_port == hash_select(conv_frame(e.conversation), new_set));
    }
    CHECK(reported == expected_moves);
    CHECK(!r.remaps.empty());  // 300 random conversations over 4->3 ports must move some
}

TEST_CASE("restoring the killed port remaps conversations back") {
    Aggregator agg = two_port_agg();
    std::vector<ConversationId> observed{
        make_frame(0x22, 0x11).conversation(),
        make_frame(0x33, 0x11).conversation(),
        make_frame(0x44, 0x11).conversation(),
    };

    PortChangeResult down = on_port_state_change(agg, port(1), false, observed, SimTime{});
    // h3 sat on port 1 and must move; h2/h4 were already on port 2 and a
    // 2->1 shrink cannot move them.
    REQUIRE(down.remaps.size() == 1);
    CHECK(down.remaps[0].conversation == observed[1]);
    CHECK(down.remaps[0].old_port == port(1));
    CHECK(down.remaps[0].new_port == port(2));

    PortChangeResult up =
        on_port_state_change(down.agg, port(1), true, observed, SimTime::from_whole_seconds(9));
    REQUIRE(up.remaps.size() == 1);
    CHECK(up.remaps[0].conversation == observed[1]);
    CHECK(up.remaps[0].old_port == port(2));
    CHECK(up.remaps[0].new_port == port(1));
}

TEST_CASE("no observed conversations means an empty remap report") {
    Aggregator agg = two_port_agg();
    PortChangeResult r = on_port_state_change(agg, port(1), false, {}, SimTime{});
    CHECK(r.remaps.empty());
}

TEST_CASE("losing the last distributing port reports no remaps") {
    Aggregator agg = two_port_agg();
    agg = detach_port(std::move(agg), port(2));
    std::vector<ConversationId> observed{make_frame(0x22, 0x11).conversation()};
    PortChangeResult r = on_port_state_change(agg, port(1), false, observed, SimTime{});
    CHECK(r.agg.distributing_ports.empty());
    CHECK(r.remaps.empty());
}

TEST_CASE("remap reports serialize with the fixed header") {
    CHECK(remap_report_to_csv({}) == "time,conversation_src,conversation_dst,old_port,new_port\n");

    RemapEntry e;
    e.time = SimTime::from_millis(30037);
    e.conversation = make_frame(0x33, 0x11).conversation();
    e.old_port = port(1);
    e.new_port = port(2);
    std::string csv = remap_report_to_csv({e});
    CHECK(csv ==
          "time,conversation_src,conversation_dst,old_port,new_port\n"
          "30.037000,00:00:00:00:00:33,00:00:00:00:00:11,1,2\n");
}

TEST_CASE("distributor tracks observed conversations and logs remaps") {
    Distributor dist;
    dist.aggregator().mac = tail_mac(0x11);
    dist.attach(port(1));
    dist.attach(port(2));
    dist.set_distributing(port(1), true, SimTime{});
    dist.set_distributing(port(2), true, SimTime{});

    PortIdentity p2 = dist.pick(make_frame(0x22, 0x11));
    PortIdentity p3 = dist.pick(make_frame(0x33, 0x11));
    PortIdentity p4 = dist.pick(make_frame(0x44, 0x11));
    CHECK(p2 == p4);
    CHECK(p2 != p3);
    CHECK(dist.observed().size() == 3);
    CHECK(dist.remap_log().empty());

    dist.set_distributing(p3, false, SimTime::from_whole_seconds(30));
    REQUIRE(dist.remap_log().size() == 1);
    CHECK(dist.remap_log()[0].conversation == make_frame(0x33, 0x11).conversation());
    CHECK(dist.remap_log()[0].new_port == p2);

    // The log is cumulative: restoring appends rather than rewriting.
    dist.set_distributing(p3, true, SimTime::from_whole_seconds(40));
    CHECK(dist.remap_log().size() == 2);
}

TEST_CASE("detach through the distributor also stops distribution") {
    Distributor dist;
    dist.attach(port(1));
    dist.set_distributing(port(1), true, SimTime{});
    dist.detach(port(1), SimTime{});
    CHECK(dist.aggregator().attached_ports.empty());
    CHECK(dist.aggregator().distributing_ports.empty());
    CHECK_THROWS_AS(dist.pick(make_frame(0x22, 0x11)), NoDistributingPortError);
}

TEST_CASE("round-robin policy rotates per frame instead of per conversation") {
    Distributor dist(DistributionPolicy::RoundRobin);
    dist.attach(port(1));
    dist.attach(port(2));
    dist.set_distributing(port(1), true, SimTime{});
    dist.set_distributing(port(2), true, SimTime{});

    PortIdentity a = dist.pick(make_frame(0x22, 0x11, 0));
    PortIdentity b = dist.pick(make_frame(0x22, 0x11, 1));
    PortIdentity c = dist.pick(make_frame(0x22, 0x11, 2));
    CHECK(a != b);
    CHECK(a == c);
}

TEST_CASE("policy names parse to the matching enum") {
    CHECK(parse_distribution_policy("xor") == DistributionPolicy::XorHash);
    CHECK(parse_distribution_policy("round-robin") == DistributionPolicy::RoundRobin);
    CHECK_THROWS_AS(parse_distribution_policy("bogus"), ConfigError);
}
