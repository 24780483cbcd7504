use std::fmt;

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident($inner:ty)) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(pub $inner);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    };
}

id_type!(
    /// 1-based node number.
    NodeId(u32)
);
id_type!(
    /// Index of a simplex link.
    LinkId(usize)
);
id_type!(GeneratorId(u32));
id_type!(LspId(u32));
id_type!(
    /// MPLS label value.
    Label(u32)
);
