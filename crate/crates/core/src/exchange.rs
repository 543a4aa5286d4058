//! Continuous double auction venue.
//!
//! Every order is for a single unit. An incoming order that crosses trades
//! against the oldest order at the best contra price, at that resting
//! order's price.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::engine::Time;

/// Integer price in currency units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Price(i64);

impl Price {
    pub fn new(value: i64) -> Self {
        debug_assert!(value >= 0, "negative price {value}");
        Price(value)
    }

    pub fn get(self) -> i64 {
        self.0
    }
}

impl fmt::Display for Price {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ExchangeId(pub u32);

impl ExchangeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OrderId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Buy,
    Sell,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::Buy => "BUY",
            Side::Sell => "SELL",
        }
    }
}

/// Who owns an order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TraderRef {
    Zi(usize),
    La,
}

impl TraderRef {
    pub fn is_la(self) -> bool {
        matches!(self, TraderRef::La)
    }
}

impl fmt::Display for TraderRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraderRef::Zi(i) => write!(f, "zi{i}"),
            TraderRef::La => f.write_str("la"),
        }
    }
}

/// A single-unit limit order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitOrder {
    pub id: OrderId,
    pub owner: TraderRef,
    pub side: Side,
    pub price: Price,
    pub submit_time: Time,
    pub venue: ExchangeId,
}

/// Best bid and offer of one exchange. A side is `None` exactly when that
/// side of the book is empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Quote {
    pub venue: ExchangeId,
    pub bid: Option<Price>,
    pub ask: Option<Price>,
    pub time: Time,
}

impl Quote {
    pub fn empty(venue: ExchangeId, time: Time) -> Self {
        Quote {
            venue,
            bid: None,
            ask: None,
            time,
        }
    }

    /// `ask - bid` when both sides are present.
    pub fn spread(&self) -> Option<i64> {
        match (self.bid, self.ask) {
            (Some(b), Some(a)) => Some(a.get() - b.get()),
            _ => None,
        }
    }
}

/// One executed unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trade {
    pub buy_order: OrderId,
    pub sell_order: OrderId,
    pub buyer: TraderRef,
    pub seller: TraderRef,
    pub buy_submit_time: Time,
    pub sell_submit_time: Time,
    /// Side of the incoming (aggressing) order.
    pub aggressor: Side,
    /// The resting order's limit price.
    pub price: Price,
    pub time: Time,
    pub venue: ExchangeId,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SubmitOutcome {
    Traded(Trade),
    Rested,
}

/// Limit order book with price-time priority.
///
/// Each side is a vector ordered from lowest to highest priority, so the
/// best order sits at the end. Books stay small, which keeps the linear
/// scans cheap.
#[derive(Debug, Default, Clone)]
pub struct OrderBook {
    bids: Vec<LimitOrder>,
    asks: Vec<LimitOrder>,
}

impl OrderBook {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn best_bid(&self) -> Option<Price> {
        self.bids.last().map(|o| o.price)
    }

    pub fn best_ask(&self) -> Option<Price> {
        self.asks.last().map(|o| o.price)
    }

    pub fn len(&self) -> usize {
        self.bids.len() + self.asks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bids.is_empty() && self.asks.is_empty()
    }

    pub fn contains(&self, id: OrderId) -> bool {
        self.get(id).is_some()
    }

    pub fn get(&self, id: OrderId) -> Option<&LimitOrder> {
        self.bids.iter().chain(&self.asks).find(|o| o.id == id)
    }

    pub fn quote(&self, venue: ExchangeId, time: Time) -> Quote {
        Quote {
            venue,
            bid: self.best_bid(),
            ask: self.best_ask(),
            time,
        }
    }

    /// Match `order` against the book or rest it.
    ///
    /// # Panics
    ///
    /// On a duplicate order id.
    pub fn submit(&mut self, order: LimitOrder, time: Time) -> SubmitOutcome {
        assert!(!self.contains(order.id), "duplicate order id {:?}", order.id);
        let crosses = match order.side {
            Side::Buy => self.best_ask().is_some_and(|q| q <= order.price),
            Side::Sell => self.best_bid().is_some_and(|q| q >= order.price),
        };
        if !crosses {
            // A new order queues behind every resting order at its price.
            let (side, pos) = match order.side {
                Side::Buy => {
                    let pos = self.bids.partition_point(|o| o.price < order.price);
                    (&mut self.bids, pos)
                }
                Side::Sell => {
                    let pos = self.asks.partition_point(|o| o.price > order.price);
                    (&mut self.asks, pos)
                }
            };
            side.insert(pos, order);
            return SubmitOutcome::Rested;
        }

        let resting = match order.side {
            Side::Buy => self.asks.pop(),
            Side::Sell => self.bids.pop(),
        }
        .expect("crossing implies a resting order");
        let (buy, sell) = match order.side {
            Side::Buy => (&order, &resting),
            Side::Sell => (&resting, &order),
        };
        SubmitOutcome::Traded(Trade {
            buy_order: buy.id,
            sell_order: sell.id,
            buyer: buy.owner,
            seller: sell.owner,
            buy_submit_time: buy.submit_time,
            sell_submit_time: sell.submit_time,
            aggressor: order.side,
            price: resting.price,
            time,
            venue: order.venue,
        })
    }

    /// Remove a resting order. Unknown or already-filled ids are ignored.
    pub fn withdraw(&mut self, id: OrderId) -> Option<LimitOrder> {
        for side in [&mut self.bids, &mut self.asks] {
            if let Some(pos) = side.iter().position(|o| o.id == id) {
                return Some(side.remove(pos));
            }
        }
        None
    }

    /// Resting orders on one side in priority order.
    pub fn resting(&self, side: Side) -> Vec<LimitOrder> {
        let orders = match side {
            Side::Buy => &self.bids,
            Side::Sell => &self.asks,
        };
        orders.iter().rev().copied().collect()
    }
}

/// Downstream consumers of an exchange's BBO feed, notified in this order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subscriber {
    Sip,
    La,
}

/// An exchange: a book plus its BBO feed.
#[derive(Debug, Clone)]
pub struct Exchange {
    pub id: ExchangeId,
    pub book: OrderBook,
    subscribers: Vec<Subscriber>,
    last_published: Quote,
}

impl Exchange {
    pub fn new(id: ExchangeId) -> Self {
        Exchange {
            id,
            book: OrderBook::new(),
            subscribers: Vec::new(),
            last_published: Quote::empty(id, 0),
        }
    }

    pub fn subscribe(&mut self, s: Subscriber) {
        self.subscribers.push(s);
    }

    pub fn subscribers(&self) -> &[Subscriber] {
        &self.subscribers
    }

    /// The BBO as of the most recent publication.
    pub fn last_published(&self) -> Quote {
        self.last_published
    }

    /// Snapshot the book's BBO as the newly published quote. The caller
    /// delivers it to [`Exchange::subscribers`] in order.
    pub fn publish_bbo(&mut self, time: Time) -> Quote {
        self.last_published = self.book.quote(self.id, time);
        self.last_published
    }
}
