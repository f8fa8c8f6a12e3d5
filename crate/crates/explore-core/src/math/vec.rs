//! Small fixed-size vectors used throughout the crate.

use core::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use super::Scalar;

/// 2D vector / point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec2<S> {
    pub x: S,
    pub y: S,
}

/// 3D vector / point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3<S> {
    pub x: S,
    pub y: S,
    pub z: S,
}

impl<S: Scalar> Vec2<S> {
    pub const fn new(x: S, y: S) -> Self {
        Self { x, y }
    }

    pub fn zero() -> Self {
        Self::new(S::zero(), S::zero())
    }

    pub fn dot(self, o: Self) -> S {
        self.x * o.x + self.y * o.y
    }

    /// z component of the cross product; positive for a left turn.
    pub fn cross(self, o: Self) -> S {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> S {
        self.dot(self).sqrt()
    }

    pub fn distance(self, o: Self) -> S {
        (self - o).norm()
    }
}

impl<S: Scalar> Vec3<S> {
    pub const fn new(x: S, y: S, z: S) -> Self {
        Self { x, y, z }
    }

    pub fn zero() -> Self {
        Self::new(S::zero(), S::zero(), S::zero())
    }

    pub fn splat(v: S) -> Self {
        Self::new(v, v, v)
    }

    pub fn dot(self, o: Self) -> S {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn norm(self) -> S {
        self.dot(self).sqrt()
    }

    pub fn distance(self, o: Self) -> S {
        (self - o).norm()
    }

    /// Unit vector in the same direction, or zero for a zero vector.
    pub fn normalized(self) -> Self {
        let n = self.norm();
        if n == S::zero() {
            Self::zero()
        } else {
            self / n
        }
    }

    pub fn xy(self) -> Vec2<S> {
        Vec2::new(self.x, self.y)
    }

    pub fn component(self, axis: usize) -> S {
        match axis {
            0 => self.x,
            1 => self.y,
            _ => self.z,
        }
    }
}

macro_rules! impl_vec_ops {
    ($t:ident { $($f:ident),+ }) => {
        impl<S: Scalar> Add for $t<S> {
            type Output = Self;
            fn add(self, o: Self) -> Self {
                Self { $($f: self.$f + o.$f),+ }
            }
        }
        impl<S: Scalar> Sub for $t<S> {
            type Output = Self;
            fn sub(self, o: Self) -> Self {
                Self { $($f: self.$f - o.$f),+ }
            }
        }
        impl<S: Scalar> Mul<S> for $t<S> {
            type Output = Self;
            fn mul(self, s: S) -> Self {
                Self { $($f: self.$f * s),+ }
            }
        }
        impl<S: Scalar> Div<S> for $t<S> {
            type Output = Self;
            fn div(self, s: S) -> Self {
                Self { $($f: self.$f / s),+ }
            }
        }
        impl<S: Scalar> Neg for $t<S> {
            type Output = Self;
            fn neg(self) -> Self {
                Self { $($f: -self.$f),+ }
            }
        }
        impl<S: Scalar> AddAssign for $t<S> {
            fn add_assign(&mut self, o: Self) {
                $(self.$f += o.$f;)+
            }
        }
        impl<S: Scalar> SubAssign for $t<S> {
            fn sub_assign(&mut self, o: Self) {
                $(self.$f -= o.$f;)+
            }
        }
    };
}

impl_vec_ops!(Vec2 { x, y });
impl_vec_ops!(Vec3 { x, y, z });

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vec3_basics() {
        let a = Vec3::new(1.0_f64, 2.0, 2.0);
        assert_eq!(a.norm(), 3.0);
        assert_eq!(a.normalized().norm(), 1.0);
        assert_eq!(Vec3::<f64>::zero().normalized(), Vec3::zero());
        let b = Vec3::new(0.0, 0.0, 1.0);
        assert_eq!(a.dot(b), 2.0);
        assert_eq!((a - a).norm(), 0.0);
    }

    #[test]
    fn cross_sign_is_left_turn() {
        let a = Vec2::new(1.0_f64, 0.0);
        let b = Vec2::new(0.0_f64, 1.0);
        assert!(a.cross(b) > 0.0);
        assert!(b.cross(a) < 0.0);
    }
}
