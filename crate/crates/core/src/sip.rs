//! Security information processor: consolidates exchange BBOs into the NBBO.

use serde::{Deserialize, Serialize};

use crate::engine::{EventKind, EventQueue, Time};
use crate::exchange::{ExchangeId, Price, Quote};

/// A price together with the venue holding it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VenuePrice {
    pub price: Price,
    pub venue: ExchangeId,
}

/// National best bid and offer. May be locked or crossed when the SIP's
/// views are stale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NbboQuote {
    pub bid: Option<VenuePrice>,
    pub ask: Option<VenuePrice>,
    pub time: Time,
}

impl NbboQuote {
    pub fn empty(time: Time) -> Self {
        NbboQuote {
            bid: None,
            ask: None,
            time,
        }
    }

    pub fn bid_price(&self) -> Option<Price> {
        self.bid.map(|v| v.price)
    }

    pub fn ask_price(&self) -> Option<Price> {
        self.ask.map(|v| v.price)
    }

    /// `ask - bid` if both sides exist and the quote is not crossed.
    pub fn valid_spread(&self) -> Option<i64> {
        match (self.bid, self.ask) {
            (Some(b), Some(a)) if b.price <= a.price => Some(a.price.get() - b.price.get()),
            _ => None,
        }
    }
}

/// Best bid (highest) and best ask (lowest) across `views`, ties going to the
/// earliest view in the slice.
pub fn compute_nbbo(views: &[Quote], time: Time) -> NbboQuote {
    let mut nbbo = NbboQuote::empty(time);
    for q in views {
        if let Some(b) = q.bid {
            if nbbo.bid.is_none_or(|cur| b > cur.price) {
                nbbo.bid = Some(VenuePrice {
                    price: b,
                    venue: q.venue,
                });
            }
        }
        if let Some(a) = q.ask {
            if nbbo.ask.is_none_or(|cur| a < cur.price) {
                nbbo.ask = Some(VenuePrice {
                    price: a,
                    venue: q.venue,
                });
            }
        }
    }
    nbbo
}

#[derive(Debug, Clone)]
pub struct Sip {
    latency: Time,
    views: Vec<Quote>,
    nbbo: NbboQuote,
}

impl Sip {
    pub fn new(n_exchanges: usize, latency: Time) -> Self {
        Sip {
            latency,
            views: (0..n_exchanges)
                .map(|i| Quote::empty(ExchangeId(i as u32), 0))
                .collect(),
            nbbo: NbboQuote::empty(0),
        }
    }

    pub fn latency(&self) -> Time {
        self.latency
    }

    /// The most recently published NBBO.
    pub fn nbbo(&self) -> NbboQuote {
        self.nbbo
    }

    pub fn views(&self) -> &[Quote] {
        &self.views
    }

    /// React to an exchange BBO publication. With zero latency the NBBO is
    /// recomputed immediately and returned for publication; otherwise an
    /// update carrying this snapshot is scheduled `latency` ticks later.
    pub fn on_bbo_update(
        &mut self,
        venue: ExchangeId,
        quote: Quote,
        time: Time,
        queue: &mut EventQueue<EventKind>,
    ) -> Option<NbboQuote> {
        if self.latency == 0 {
            Some(self.apply_nbbo_update(venue, quote, time))
        } else {
            queue.schedule(time + self.latency, EventKind::NbboUpdate { venue, quote });
            None
        }
    }

    /// Replace the stored view of `venue` and recompute the NBBO.
    pub fn apply_nbbo_update(&mut self, venue: ExchangeId, snapshot: Quote, time: Time) -> NbboQuote {
        self.views[venue.index()] = snapshot;
        self.nbbo = compute_nbbo(&self.views, time);
        self.nbbo
    }
}
