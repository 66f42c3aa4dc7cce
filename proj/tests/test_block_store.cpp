#include <atomic>
#include <thread>

#include "blocktx/block_store.hpp"
#include "doctest.h"

using namespace blocktx;

TEST_CASE("fresh store reads zero blocks") {
  BlockStore store(256, 8);
  Bytes b = store.read(0);
  CHECK(b.size() == 256);
  for (std::byte x : b) CHECK(std::to_integer<int>(x) == 0);
}

TEST_CASE("publish then read returns the written image") {
  BlockStore store(256, 8);
  Workspace ws;
  ws.pages[3] = Bytes(256, std::byte{0xab});
  store.publish(ws);
  CHECK(store.read(3) == Bytes(256, std::byte{0xab}));
  CHECK(store.read(2) == Bytes(256));
}

TEST_CASE("empty workspace publish is a no-op") {
  BlockStore store(256, 4);
  Bytes before = store.read(1);
  store.publish(Workspace{});
  CHECK(store.read(1) == before);
}

TEST_CASE("out of range access throws") {
  BlockStore store(256, 4);
  CHECK_THROWS_AS(store.read(4), std::out_of_range);
  CHECK_THROWS_AS(store.read(~0ull), std::out_of_range);
}

TEST_CASE("restore reverts blocks to before-images") {
  BlockStore store(256, 4);
  Bytes original = store.read(2);

  Workspace first;
  first.pages[2] = Bytes(256, std::byte{0x11});
  store.publish(first);
  Bytes after_first = store.read(2);

  Workspace second;
  second.pages[2] = Bytes(256, std::byte{0x22});
  store.publish(second);

  // Undo in reverse order of the publishes.
  store.restore({{BlockId{2}, after_first}});
  store.restore({{BlockId{2}, original}});
  CHECK(store.read(2) == original);

  store.restore({});  // empty restore is a no-op
  CHECK(store.read(2) == original);
}

TEST_CASE("sequential publishes to disjoint blocks both visible") {
  // Oracle: replaying the same writes single-threaded gives the same state.
  BlockStore store(128, 8);
  BlockStore replay(128, 8);
  for (int i = 0; i < 2; ++i) {
    Workspace ws;
    ws.pages[static_cast<BlockId>(i)] = Bytes(128, std::byte(0x40 + i));
    store.publish(ws);
    replay.publish(ws);
  }
  for (BlockId b = 0; b < 8; ++b) CHECK(store.read(b) == replay.read(b));
}

TEST_CASE("concurrent block access never yields torn blocks") {
  // Writers stamp whole blocks with one repeated byte; any mixed-content
  // read would be a torn block.
  BlockStore store(512, 4);
  std::atomic<bool> stop{false};
  std::atomic<int> torn{0};

  std::thread writer([&] {
    for (int i = 1; i < 400; ++i) {
      Workspace ws;
      ws.pages[1] = Bytes(512, static_cast<std::byte>(i % 251));
      store.publish(ws);
    }
    stop = true;
  });
  std::vector<std::thread> readers;
  for (int r = 0; r < 3; ++r) {
    readers.emplace_back([&] {
      while (!stop) {
        Bytes b = store.read(1);
        for (std::size_t i = 1; i < b.size(); ++i) {
          if (b[i] != b[0]) {
            torn.fetch_add(1);
            break;
          }
        }
      }
    });
  }
  writer.join();
  for (auto& t : readers) t.join();
  CHECK(torn.load() == 0);
}
